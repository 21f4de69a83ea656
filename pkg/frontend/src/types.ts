/** Wire types of the render service this studio drives. */

export interface ModelInfo {
  prompts: string[];
  n: number;
  bounds: [number[], number[]];
  iteration: number;
  image_limits: { max_width: number; max_height: number };
  maps: string[];
}

export interface CameraBody {
  position: [number, number, number];
  target: [number, number, number];
  up: [number, number, number];
  fov_deg: number;
  width: number;
  height: number;
}

export type LatentBody =
  | { fixed: number[] }
  | { sweep_t: number; pair: [number, number] }
  | { anchors: { pos: [number, number, number]; code: number[] }[]; smoothing: number };

export interface RenderBody {
  camera: CameraBody;
  latent: LatentBody;
  maps: string[];
  n_samples: number;
}

export interface AnchorPoint {
  pos: [number, number, number];
  code: number[];
}

export interface AnchorValidationError {
  line: number;
  message: string;
}

export type RenderMap = "rgb" | "normal" | "depth" | "opacity";
