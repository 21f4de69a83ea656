/** Orbit camera state and its deterministic mapping to a camera body. */

import type { CameraBody } from "./types";

export interface OrbitState {
  azimuth: number; // radians
  elevation: number; // radians
  radius: number;
  target: [number, number, number];
  fovDeg: number;
}

const MAX_ELEVATION = Math.PI / 2 - 0.05;

export function defaultOrbit(bounds: [number[], number[]]): OrbitState {
  const hi = bounds[1];
  const extent = Math.max(hi[0]!, hi[1]!, hi[2]!, 0.5);
  return {
    azimuth: Math.PI / 4,
    elevation: Math.PI / 12,
    radius: 2.4 * extent,
    target: [0, 0, 0],
    fovDeg: 40,
  };
}

export function rotateOrbit(state: OrbitState, dAzimuth: number, dElevation: number): OrbitState {
  return {
    ...state,
    azimuth: (state.azimuth + dAzimuth) % (2 * Math.PI),
    elevation: Math.min(Math.max(state.elevation + dElevation, -MAX_ELEVATION), MAX_ELEVATION),
  };
}

export function zoomOrbit(state: OrbitState, factor: number): OrbitState {
  return { ...state, radius: Math.min(Math.max(state.radius * factor, 0.2), 50) };
}

export function cameraBody(state: OrbitState, width: number, height: number): CameraBody {
  const ce = Math.cos(state.elevation);
  const position: [number, number, number] = [
    state.target[0] + state.radius * ce * Math.cos(state.azimuth),
    state.target[1] + state.radius * ce * Math.sin(state.azimuth),
    state.target[2] + state.radius * Math.sin(state.elevation),
  ];
  return {
    position,
    target: [...state.target],
    up: [0, 0, 1],
    fov_deg: state.fovDeg,
    width,
    height,
  };
}
