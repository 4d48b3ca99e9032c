export type Axis = "x" | "y" | "z";

export interface VolumeInfo {
  id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
}

export interface OpenSessionResponse {
  session_id: string;
  case_id: string;
  dims: [number, number, number];
  spacing: [number, number, number];
  revision: number;
  threshold_fraction: number;
  threshold_mode: string;
  seeds: number[][];
}

export interface Histogram {
  edges: number[];
  counts: number[];
}

export interface ThresholdResponse {
  threshold_value: number;
  voxels_selected: number;
  revision: number;
}

export interface GrowResponse {
  mask_voxels: number;
  seeds: number[][];
  revision: number;
}

export interface EditResponse {
  revision: number;
  mask_voxels: number;
}

export interface SaveResponse {
  mask_path: string;
  session_path: string;
  revision: number;
}

export interface SliceJson {
  axis: Axis;
  index: number;
  width: number;
  height: number;
  pixels: number[][];
  mask: number[][] | null;
}

export type EditOp = "paint" | "erase";
