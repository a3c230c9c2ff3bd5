// Shared domain and wire types for the annotator.
//
// Wire types mirror the segmentation service's JSON schemas verbatim
// (snake_case fields); domain types are what the UI modules pass around.

export type Point = [number, number]; // [x, y] in image pixel coordinates
export type Rgb = [number, number, number];

export interface CanvasStroke {
  id: number; // client-generated, not serialized
  points: Point[];
  classId: number;
  radius: number; // brush radius in pixels
}

export interface PaletteEntry {
  id: number;
  name: string;
  color: Rgb;
}

// ---- server wire schemas ----

export interface WireStroke {
  points: Point[];
  class_id: number;
  radius: number;
}

export interface RlePayload {
  width: number;
  height: number;
  runs: Array<[number, number]>; // [value, count], row-major
}

export interface WireLabelMask extends RlePayload {
  palette: Record<string, Rgb>;
}

export interface PerClassStat {
  class_id: number;
  min: number;
  mean: number;
  max: number;
}

export interface SegmentRequest {
  image: string; // base64 PNG (data: URI accepted) or server-side path
  squiggles: WireStroke[];
  model_id?: string;
  return_probs?: boolean;
}

export interface SegmentResponse {
  label_mask: WireLabelMask;
  timing_ms: Record<string, number>;
  per_class?: PerClassStat[];
}

export interface ExportFeature {
  type: 'Feature';
  geometry: { type: 'Polygon'; coordinates: number[][][] };
  properties: { class_id: number; class_name: string; color: Rgb };
}

export interface ExportCollection {
  type: 'FeatureCollection';
  features: ExportFeature[];
}
