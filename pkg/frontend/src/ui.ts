/** DOM shell: binds the studio state, the preview scheduler, and the
 * service client to the controls in index.html.  All behavior worth
 * testing lives in the imported modules; this file is wiring. */

import { AnchorParseError } from "./anchors";
import { StudioClient } from "./client";
import { PreviewScheduler } from "./debounce";
import { StudioState } from "./state";

type Mode = "sweep" | "anchors" | "compare";

const PLANES: { id: string; axes: [number, number] }[] = [
  { id: "plane-xz", axes: [0, 2] }, // front orthographic
  { id: "plane-yz", axes: [1, 2] }, // side orthographic
];

export function startStudio(root: Document = document): void {
  const state = new StudioState();
  let client = new StudioClient(valueOf(root, "service-url") || "http://127.0.0.1:8316");
  let mode: Mode = "sweep";
  let selectedAnchor = -1;

  const banner = root.getElementById("banner")!;
  const viewport = root.getElementById("viewport") as HTMLImageElement;
  const compareA = root.getElementById("compare-a") as HTMLImageElement;
  const compareB = root.getElementById("compare-b") as HTMLImageElement;

  const scheduler = new PreviewScheduler(client, {
    onUpdate: (update) => {
      const blob = new Blob([update.bytes.slice()], { type: "image/png" });
      viewport.src = URL.createObjectURL(blob);
      viewport.dataset.resolution = update.resolution;
    },
    onError: (err) => showError(String(err)),
  });

  function showError(message: string): void {
    banner.textContent = message;
    banner.classList.add("visible");
  }

  function clearError(): void {
    banner.textContent = "";
    banner.classList.remove("visible");
  }

  function schedulePreview(scrubbing = false): void {
    if (!state.info) return;
    clearError();
    if (mode === "anchors") {
      if (!state.canPreviewAnchors()) {
        showError("place at least one anchor to preview a hybrid");
        scheduler.cancel();
        return;
      }
      scheduler.schedule((size) => state.anchorsBody(size), scrubbing);
    } else if (mode === "sweep") {
      scheduler.schedule((size) => state.sweepBody(size), scrubbing);
    } else {
      void renderCompare();
    }
  }

  async function renderCompare(): Promise<void> {
    try {
      const [a, b] = await Promise.all([
        client.render(state.vertexBody(state.pair[0], 256)),
        client.render(state.vertexBody(state.pair[1], 256)),
      ]);
      compareA.src = URL.createObjectURL(new Blob([a.bytes.slice()], { type: "image/png" }));
      compareB.src = URL.createObjectURL(new Blob([b.bytes.slice()], { type: "image/png" }));
    } catch (err) {
      showError(String(err));
    }
  }

  async function connect(): Promise<void> {
    client = new StudioClient(valueOf(root, "service-url") || client.baseUrl);
    try {
      await state.connect(client);
      clearError();
      renderPromptChips();
      drawPlanes();
      schedulePreview();
    } catch {
      showError(state.status.message);
    }
  }

  function renderPromptChips(): void {
    const box = root.getElementById("prompts")!;
    box.innerHTML = "";
    state.info?.prompts.forEach((prompt, i) => {
      const chip = root.createElement("span");
      chip.className = "chip";
      chip.textContent = `${i}: ${prompt}`;
      chip.addEventListener("click", () => {
        if (selectedAnchor >= 0) {
          state.retagAnchor(selectedAnchor, state.vertexCode(i));
          drawPlanes();
          schedulePreview();
        }
      });
      box.appendChild(chip);
    });
  }

  function planeToWorld(plane: { axes: [number, number] }, x: number, y: number, size: number) {
    const bounds = state.info!.bounds;
    const [ax, ay] = plane.axes;
    const world: [number, number, number] = [0, 0, 0];
    world[ax] = bounds[0][ax]! + (x / size) * (bounds[1][ax]! - bounds[0][ax]!);
    world[ay] = bounds[1][ay]! - (y / size) * (bounds[1][ay]! - bounds[0][ay]!);
    return world;
  }

  function drawPlanes(): void {
    if (!state.info) return;
    for (const plane of PLANES) {
      const canvas = root.getElementById(plane.id) as HTMLCanvasElement;
      const ctx = canvas.getContext("2d")!;
      const size = canvas.width;
      ctx.clearRect(0, 0, size, size);
      ctx.strokeStyle = "#888";
      ctx.strokeRect(0.5, 0.5, size - 1, size - 1);
      const bounds = state.info.bounds;
      const [ax, ay] = plane.axes;
      state.anchors.forEach((anchor, i) => {
        const px = ((anchor.pos[ax]! - bounds[0][ax]!) / (bounds[1][ax]! - bounds[0][ax]!)) * size;
        const py = ((bounds[1][ay]! - anchor.pos[ay]!) / (bounds[1][ay]! - bounds[0][ay]!)) * size;
        const hue = (anchor.code.indexOf(Math.max(...anchor.code)) * 137) % 360;
        ctx.fillStyle = i === selectedAnchor ? "#000" : `hsl(${hue} 70% 50%)`;
        ctx.beginPath();
        ctx.arc(px, py, 5, 0, Math.PI * 2);
        ctx.fill();
      });
    }
  }

  function bindPlane(plane: { id: string; axes: [number, number] }): void {
    const canvas = root.getElementById(plane.id) as HTMLCanvasElement;
    let dragging = -1;
    canvas.addEventListener("mousedown", (ev) => {
      if (!state.info) return;
      const rect = canvas.getBoundingClientRect();
      const x = ev.clientX - rect.left;
      const y = ev.clientY - rect.top;
      const world = planeToWorld(plane, x, y, canvas.width);
      // pick the nearest anchor on this plane, or add one
      let best = -1;
      let bestD = 12;
      state.anchors.forEach((anchor, i) => {
        const [ax, ay] = plane.axes;
        const px = ((anchor.pos[ax]! - state.info!.bounds[0][ax]!) /
          (state.info!.bounds[1][ax]! - state.info!.bounds[0][ax]!)) * canvas.width;
        const py = ((state.info!.bounds[1][ay]! - anchor.pos[ay]!) /
          (state.info!.bounds[1][ay]! - state.info!.bounds[0][ay]!)) * canvas.width;
        const d = Math.hypot(px - x, py - y);
        if (d < bestD) {
          best = i;
          bestD = d;
        }
      });
      if (best === -1 && ev.shiftKey) {
        state.addAnchor(world, 0);
        best = state.anchors.length - 1;
      }
      selectedAnchor = best;
      dragging = best;
      drawPlanes();
    });
    canvas.addEventListener("mousemove", (ev) => {
      if (dragging < 0 || !state.info) return;
      const rect = canvas.getBoundingClientRect();
      const world = planeToWorld(plane, ev.clientX - rect.left, ev.clientY - rect.top, canvas.width);
      const current = state.anchors[dragging]!.pos;
      const next: [number, number, number] = [...current];
      next[plane.axes[0]] = world[plane.axes[0]]!;
      next[plane.axes[1]] = world[plane.axes[1]]!;
      const { clamped } = state.dragAnchor(dragging, next);
      canvas.classList.toggle("clamped", clamped);
      drawPlanes();
      schedulePreview(true);
    });
    canvas.addEventListener("mouseup", () => {
      dragging = -1;
      schedulePreview();
    });
  }

  // controls
  root.getElementById("connect")!.addEventListener("click", () => void connect());
  root.getElementById("slider")!.addEventListener("input", (ev) => {
    state.setT(Number((ev.target as HTMLInputElement).value));
    if (mode === "sweep") schedulePreview(true);
  });
  root.getElementById("slider")!.addEventListener("change", () => schedulePreview());
  for (const m of ["sweep", "anchors", "compare"] as Mode[]) {
    root.getElementById(`mode-${m}`)!.addEventListener("click", () => {
      mode = m;
      schedulePreview();
    });
  }
  root.getElementById("delete-anchor")!.addEventListener("click", () => {
    if (selectedAnchor >= 0) {
      state.deleteAnchor(selectedAnchor);
      selectedAnchor = -1;
      drawPlanes();
      schedulePreview();
    }
  });
  root.getElementById("export-anchors")!.addEventListener("click", () => {
    const blob = new Blob([state.exportAnchors()], { type: "text/plain" });
    const a = root.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "layout.anchors";
    a.click();
  });
  (root.getElementById("import-anchors") as HTMLInputElement).addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    try {
      const text = await file.text();
      await client.validateAnchors(text); // service-side field validation
      state.importAnchors(text);
      drawPlanes();
      schedulePreview();
    } catch (err) {
      showError(err instanceof AnchorParseError ? err.message : String(err));
    }
  });
  root.getElementById("orbit-left")!.addEventListener("click", () => {
    state.rotateCamera(-0.2, 0);
    schedulePreview();
  });
  root.getElementById("orbit-right")!.addEventListener("click", () => {
    state.rotateCamera(0.2, 0);
    schedulePreview();
  });

  for (const plane of PLANES) bindPlane(plane);
}

function valueOf(root: Document, id: string): string {
  return (root.getElementById(id) as HTMLInputElement | null)?.value ?? "";
}
