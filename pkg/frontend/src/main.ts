// DOM wiring for the annotator page.
//
// Three stacked canvases: the image at the bottom, the segmentation
// overlay above it, and the stroke layer on top. The image canvas is
// painted once per load and never touched again; overlay and strokes are
// separate layers, so nothing the UI does can mutate image pixels.

import { ApiClient, ApiError, SegmentQueue } from './api';
import { buildOverlay } from './overlay';
import { decodeRle } from './rle';
import { SessionState } from './session';
import { clampStroke, StrokeBuilder, strokesFromJson, strokesToJson, strokeToWire } from './strokes';
import type { CanvasStroke, PaletteEntry, SegmentResponse } from './types';

const AUTO_SEGMENT_DEBOUNCE_MS = 600;

const session = new SessionState();
const client = new ApiClient('');

let palette: PaletteEntry[] = [];
let selectedClass = 0;
let brushRadius = 2.0;
let imageLoaded = false;
let imageDataUrl = '';
let autoSegment = false;
let autoTimer: number | undefined;
let builder: StrokeBuilder | null = null;

document.body.innerHTML = `
  <header>
    <h1>Patch annotator</h1>
    <div id="banners"></div>
  </header>
  <main>
    <div id="toolbar">
      <label class="file-btn">Load image<input type="file" id="imageInput" accept="image/png"></label>
      <span id="paletteBox"></span>
      <label>Brush <input type="range" id="brush" min="0.5" max="12" step="0.5" value="2"><span id="brushVal">2</span>px</label>
      <button id="undoBtn" disabled>Undo</button>
      <button id="redoBtn" disabled>Redo</button>
      <button id="segmentBtn" disabled>Segment</button>
      <label><input type="checkbox" id="autoToggle"> auto</label>
      <label>Overlay <input type="range" id="opacity" min="0" max="1" step="0.05" value="0.5"></label>
      <button id="exportBtn" disabled>Export</button>
      <label class="file-btn">Import strokes<input type="file" id="importInput" accept="application/json"></label>
    </div>
    <div id="stage">
      <canvas id="imageLayer"></canvas>
      <canvas id="overlayLayer"></canvas>
      <canvas id="strokeLayer"></canvas>
    </div>
    <pre id="timings"></pre>
  </main>
`;

function el<T extends HTMLElement>(id: string): T {
  return document.getElementById(id) as T;
}

const imageLayer = el<HTMLCanvasElement>('imageLayer');
const overlayLayer = el<HTMLCanvasElement>('overlayLayer');
const strokeLayer = el<HTMLCanvasElement>('strokeLayer');
const segmentBtn = el<HTMLButtonElement>('segmentBtn');
const exportBtn = el<HTMLButtonElement>('exportBtn');
const undoBtn = el<HTMLButtonElement>('undoBtn');
const redoBtn = el<HTMLButtonElement>('redoBtn');

// Failures surface here and never block interaction.
function banner(message: string, kind: 'error' | 'info' = 'error'): void {
  const box = el<HTMLDivElement>('banners');
  const item = document.createElement('div');
  item.className = `banner ${kind}`;
  item.textContent = message;
  const close = document.createElement('button');
  close.textContent = '×';
  close.onclick = () => item.remove();
  item.append(close);
  box.append(item);
  window.setTimeout(() => item.remove(), 8000);
}

function colorCss([r, g, b]: [number, number, number]): string {
  return `rgb(${r}, ${g}, ${b})`;
}

function classColor(classId: number): [number, number, number] {
  const entry = palette.find((p) => p.id === classId);
  return entry === undefined ? [128, 128, 128] : entry.color;
}

function refreshButtons(): void {
  undoBtn.disabled = !session.canUndo();
  redoBtn.disabled = !session.canRedo();
  segmentBtn.disabled = !imageLoaded || session.strokes.length === 0;
  exportBtn.disabled = !session.canExport();
}

function drawDot(ctx: CanvasRenderingContext2D, x: number, y: number, radius: number): void {
  ctx.beginPath();
  ctx.arc(x, y, radius, 0, Math.PI * 2);
  ctx.fill();
}

function renderStroke(ctx: CanvasRenderingContext2D, stroke: CanvasStroke): void {
  ctx.fillStyle = ctx.strokeStyle = colorCss(classColor(stroke.classId));
  ctx.lineWidth = stroke.radius * 2;
  ctx.lineCap = ctx.lineJoin = 'round';
  const first = stroke.points[0]!;
  if (stroke.points.length === 1) {
    drawDot(ctx, first[0], first[1], stroke.radius);
    return;
  }
  ctx.beginPath();
  ctx.moveTo(first[0], first[1]);
  for (const [x, y] of stroke.points.slice(1)) {
    ctx.lineTo(x, y);
  }
  ctx.stroke();
}

function renderStrokes(): void {
  const ctx = strokeLayer.getContext('2d')!;
  ctx.clearRect(0, 0, strokeLayer.width, strokeLayer.height);
  for (const stroke of session.strokes) {
    renderStroke(ctx, stroke);
  }
}

function renderOverlay(): void {
  const ctx = overlayLayer.getContext('2d')!;
  ctx.clearRect(0, 0, overlayLayer.width, overlayLayer.height);
  const response = session.lastResponse;
  if (response === null) {
    return;
  }
  const mask = response.label_mask;
  const labels = decodeRle(mask);
  const rgba = buildOverlay(labels, mask.width, mask.height, mask.palette, session.overlayOpacity);
  ctx.putImageData(new ImageData(rgba, mask.width, mask.height), 0, 0);
}

function showTimings(response: SegmentResponse): void {
  const parts = Object.entries(response.timing_ms).map(([stage, ms]) => `${stage} ${ms.toFixed(1)} ms`);
  el<HTMLPreElement>('timings').textContent = parts.join('  |  ');
}

const queue = new SegmentQueue(
  client,
  (response) => {
    const mask = response.label_mask;
    if (mask.width !== imageLayer.width || mask.height !== imageLayer.height) {
      banner(`label mask is ${mask.width}x${mask.height}, image is ${imageLayer.width}x${imageLayer.height}`);
      return;
    }
    try {
      session.setResponse(response);
      renderOverlay();
      showTimings(response);
    } catch (err) {
      banner(err instanceof Error ? err.message : String(err));
      return;
    }
    refreshButtons();
  },
  (error: ApiError) => {
    banner(error.message);
  },
);

function requestSegmentation(): void {
  if (!imageLoaded || session.strokes.length === 0) {
    return;
  }
  const w = imageLayer.width;
  const h = imageLayer.height;
  const squiggles = session.strokes.map((s) => strokeToWire(clampStroke(s, w, h)));
  queue.submit({ image: imageDataUrl, squiggles, return_probs: false });
}

function scheduleAutoSegment(): void {
  if (!autoSegment) {
    return;
  }
  window.clearTimeout(autoTimer);
  autoTimer = window.setTimeout(requestSegmentation, AUTO_SEGMENT_DEBOUNCE_MS);
}

// ---- stroke capture ----

// Map a pointer event to image coordinates. Integer coordinates are
// pixel centers (the rasterizer's convention), hence the half-pixel shift
// from the canvas cell coordinates.
function canvasPoint(ev: PointerEvent): [number, number] {
  const rect = strokeLayer.getBoundingClientRect();
  return [
    ((ev.clientX - rect.left) / rect.width) * strokeLayer.width - 0.5,
    ((ev.clientY - rect.top) / rect.height) * strokeLayer.height - 0.5,
  ];
}

strokeLayer.addEventListener('pointerdown', (ev) => {
  if (!imageLoaded || selectedClass < 1) {
    if (imageLoaded) {
      banner('select a class from the palette first', 'info');
    }
    return;
  }
  strokeLayer.setPointerCapture(ev.pointerId);
  builder = new StrokeBuilder(selectedClass, brushRadius);
  const [x, y] = canvasPoint(ev);
  builder.add(x, y);
  const ctx = strokeLayer.getContext('2d')!;
  ctx.fillStyle = colorCss(classColor(selectedClass));
  drawDot(ctx, x, y, brushRadius);
});

strokeLayer.addEventListener('pointermove', (ev) => {
  if (builder === null) {
    return;
  }
  const [x, y] = canvasPoint(ev);
  if (builder.add(x, y)) {
    renderStrokes(); // committed strokes
    const ctx = strokeLayer.getContext('2d')!;
    // live preview of the in-progress stroke
    const preview = builder.finish();
    if (preview !== null) {
      renderStroke(ctx, preview);
    }
  }
});

strokeLayer.addEventListener('pointerup', () => {
  if (builder === null) {
    return;
  }
  const stroke = builder.finish();
  builder = null;
  if (stroke === null) {
    return; // empty drag, nothing to keep
  }
  session.addStroke(stroke);
  renderStrokes();
  refreshButtons();
  scheduleAutoSegment();
});

// ---- toolbar ----

el<HTMLInputElement>('imageInput').addEventListener('change', (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (file === undefined) {
    return;
  }
  const reader = new FileReader();
  reader.onload = () => {
    const img = new Image();
    img.onload = () => {
      for (const layer of [imageLayer, overlayLayer, strokeLayer]) {
        layer.width = img.width;
        layer.height = img.height;
      }
      imageLayer.getContext('2d')!.drawImage(img, 0, 0);
      imageDataUrl = reader.result as string;
      imageLoaded = true;
      if (img.width % 32 !== 0 || img.height % 32 !== 0) {
        banner(`image is ${img.width}x${img.height}; the service needs sides divisible by 32`, 'info');
      }
      renderStrokes();
      refreshButtons();
    };
    img.src = reader.result as string;
  };
  reader.readAsDataURL(file);
});

function buildPaletteButtons(): void {
  const box = el<HTMLSpanElement>('paletteBox');
  box.innerHTML = '';
  for (const entry of palette) {
    const btn = document.createElement('button');
    btn.className = 'class-btn';
    btn.textContent = entry.name;
    btn.style.borderColor = colorCss(entry.color);
    btn.onclick = () => {
      selectedClass = entry.id;
      for (const other of box.querySelectorAll('button')) {
        other.classList.toggle('selected', other === btn);
      }
    };
    box.append(btn);
  }
}

el<HTMLInputElement>('brush').addEventListener('input', (ev) => {
  brushRadius = Number((ev.target as HTMLInputElement).value);
  el<HTMLSpanElement>('brushVal').textContent = String(brushRadius);
});

el<HTMLInputElement>('opacity').addEventListener('input', (ev) => {
  session.setOverlayOpacity(Number((ev.target as HTMLInputElement).value));
  renderOverlay();
});

el<HTMLInputElement>('autoToggle').addEventListener('change', (ev) => {
  autoSegment = (ev.target as HTMLInputElement).checked;
  scheduleAutoSegment();
});

segmentBtn.addEventListener('click', requestSegmentation);

undoBtn.addEventListener('click', () => {
  if (session.undo()) {
    renderStrokes();
    refreshButtons();
  }
});

redoBtn.addEventListener('click', () => {
  if (session.redo()) {
    renderStrokes();
    refreshButtons();
  }
});

window.addEventListener('keydown', (ev) => {
  if (!(ev.ctrlKey || ev.metaKey) || ev.key.toLowerCase() !== 'z') {
    return;
  }
  ev.preventDefault();
  if (ev.shiftKey ? session.redo() : session.undo()) {
    renderStrokes();
    refreshButtons();
  }
});

function download(name: string, text: string, mime: string): void {
  const url = URL.createObjectURL(new Blob([text], { type: mime }));
  const a = document.createElement('a');
  a.href = url;
  a.download = name;
  a.click();
  URL.revokeObjectURL(url);
}

exportBtn.addEventListener('click', async () => {
  const response = session.lastResponse;
  if (response === null) {
    return;
  }
  try {
    const collection = await client.exportGeoJson(response.label_mask);
    download('annotations.geojson', JSON.stringify(collection, null, 2), 'application/geo+json');
    download('strokes.json', strokesToJson(session.strokes), 'application/json');
  } catch (err) {
    banner(err instanceof Error ? err.message : String(err));
  }
});

el<HTMLInputElement>('importInput').addEventListener('change', (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (file === undefined) {
    return;
  }
  const reader = new FileReader();
  reader.onload = () => {
    try {
      session.replaceStrokes(strokesFromJson(reader.result as string));
    } catch (err) {
      banner(err instanceof Error ? err.message : String(err));
      return;
    }
    renderStrokes();
    refreshButtons();
  };
  reader.readAsText(file);
});

async function boot(): Promise<void> {
  try {
    palette = await client.fetchPalette();
    buildPaletteButtons();
  } catch (err) {
    banner(`cannot reach the segmentation service: ${err instanceof Error ? err.message : String(err)}`);
  }
  refreshButtons();
}

void boot();
