/** Browser wiring: canvas painting, control panel, gallery.
 *
 *  Everything stateful lives in EditorSession; this file only translates DOM
 *  events into session calls and renders the result.  The mask overlay draws
 *  the hidden region at 50% opacity.
 */

import { EditorSession, distinctTileCount, GALLERY_CAP } from "./editor.js";
import type { ImageCodec, RawImage } from "./pixels.js";
import { deserializeLog, replaySession, serializeLog } from "./replay.js";
import type { Stroke } from "./strokes.js";
import { HttpTransport } from "./transport.js";

class CanvasCodec implements ImageCodec {
  async decode(b64: string): Promise<RawImage> {
    const img = new Image();
    await new Promise<void>((resolve, reject) => {
      img.onload = () => resolve();
      img.onerror = () => reject(new Error("image decode failed"));
      img.src = "data:image/png;base64," + b64;
    });
    const cv = document.createElement("canvas");
    cv.width = img.naturalWidth;
    cv.height = img.naturalHeight;
    const ctx = cv.getContext("2d")!;
    ctx.drawImage(img, 0, 0);
    const d = ctx.getImageData(0, 0, cv.width, cv.height);
    return { width: d.width, height: d.height, data: d.data };
  }

  async encode(img: RawImage): Promise<string> {
    const cv = document.createElement("canvas");
    cv.width = img.width;
    cv.height = img.height;
    cv.getContext("2d")!.putImageData(
      new ImageData(new Uint8ClampedArray(img.data), img.width, img.height),
      0,
      0,
    );
    return cv.toDataURL("image/png").split(",", 2)[1]!;
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setup(): void {
  const serviceUrl =
    new URLSearchParams(location.search).get("service") ??
    "http://127.0.0.1:8080";
  const session = new EditorSession({
    transport: new HttpTransport(serviceUrl),
    codec: new CanvasCodec(),
  });

  const canvas = el<HTMLCanvasElement>("board");
  const ctx = canvas.getContext("2d")!;
  const statusLine = el<HTMLElement>("status");
  const galleryBox = el<HTMLElement>("gallery");
  const fillBtn = el<HTMLButtonElement>("fill");
  const undoBtn = el<HTMLButtonElement>("undo");
  const retryBtn = el<HTMLButtonElement>("retry");

  let baseBitmap: ImageBitmap | null = null;
  let tool: "brush" | "eraser" = "brush";
  let drag: Stroke | null = null;

  const brushRadius = () =>
    Number(el<HTMLInputElement>("radius").value) || 8;

  async function rebuildBitmap(): Promise<void> {
    const px = session.basePixels;
    baseBitmap = px
      ? await createImageBitmap(
          new ImageData(
            new Uint8ClampedArray(px.data),
            px.width,
            px.height,
          ),
        )
      : null;
  }

  function render(): void {
    if (!baseBitmap) {
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      return;
    }
    canvas.width = baseBitmap.width;
    canvas.height = baseBitmap.height;
    ctx.drawImage(baseBitmap, 0, 0);

    const vis = session.visibleBitmap();
    if (vis) {
      ctx.save();
      ctx.globalAlpha = 0.5;
      ctx.fillStyle = "#d33";
      for (let y = 0; y < canvas.height; y++) {
        for (let x = 0; x < canvas.width; x++) {
          if (!vis[y * canvas.width + x]) ctx.fillRect(x, y, 1, 1);
        }
      }
      ctx.restore();
    }

    const st = session.fillStatus;
    statusLine.textContent =
      st.kind === "inflight"
        ? "filling…"
        : st.kind === "error"
          ? `error: ${st.message}`
          : `history depth ${session.historyDepth}`;
    fillBtn.disabled = !session.canFill();
    undoBtn.disabled = session.historyDepth === 0;
    retryBtn.hidden = !(st.kind === "error" && st.retryable);

    galleryBox.replaceChildren();
    for (const [i, tile] of (session.gallery ?? []).entries()) {
      const fig = document.createElement("figure");
      const img = document.createElement("img");
      img.src = "data:image/png;base64," + tile.image;
      img.title = `sample ${tile.index}, seed ${tile.seed}`;
      img.addEventListener("click", async () => {
        session.accept(i);
        await rebuildBitmap();
        render();
      });
      const cap = document.createElement("figcaption");
      cap.textContent = `#${tile.index} seed ${tile.seed}`;
      fig.append(img, cap);
      galleryBox.append(fig);
    }
    if (session.gallery) {
      el<HTMLElement>("distinct").textContent =
        `${distinctTileCount(session.gallery)} distinct of ` +
        `${session.gallery.length}`;
    }
  }

  function canvasPoint(ev: PointerEvent): [number, number] {
    const r = canvas.getBoundingClientRect();
    return [
      ((ev.clientX - r.left) * canvas.width) / r.width,
      ((ev.clientY - r.top) * canvas.height) / r.height,
    ];
  }

  canvas.addEventListener("pointerdown", (ev) => {
    if (!session.baseImage) return;
    const [x, y] = canvasPoint(ev);
    if (tool === "eraser") {
      session.eraseAt(x, y, brushRadius());
      render();
      return;
    }
    drag = { points: [[x, y]], radius: brushRadius() };
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (drag) drag.points.push(canvasPoint(ev));
  });
  canvas.addEventListener("pointerup", () => {
    if (drag) {
      session.paint(drag);
      drag = null;
      render();
    }
  });

  el<HTMLInputElement>("file").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const buf = new Uint8Array(await file.arrayBuffer());
    let bin = "";
    for (const byte of buf) bin += String.fromCharCode(byte);
    await session.loadImage(btoa(bin));
    await rebuildBitmap();
    render();
  });

  el<HTMLSelectElement>("tool").addEventListener("change", (ev) => {
    tool = (ev.target as HTMLSelectElement).value as typeof tool;
  });

  const applySettings = () => {
    const lockRaw = el<HTMLInputElement>("seedlock").value.trim();
    session.updateSettings({
      numSamples: Math.min(
        GALLERY_CAP,
        Number(el<HTMLInputElement>("nsamples").value) || 4,
      ),
      topK: Number(el<HTMLInputElement>("topk").value) || 20,
      refine: el<HTMLInputElement>("refine").checked,
      seedLock: lockRaw === "" ? null : Number(lockRaw),
    });
  };
  for (const id of ["nsamples", "topk", "refine", "seedlock"]) {
    el<HTMLInputElement>(id).addEventListener("change", applySettings);
  }

  fillBtn.addEventListener("click", async () => {
    render();
    try {
      await session.requestFill();
    } catch {
      // state machine already carries the error detail
    }
    render();
  });
  retryBtn.addEventListener("click", async () => {
    try {
      await session.retryFill();
    } catch {
      // surfaced via fillStatus
    }
    render();
  });
  undoBtn.addEventListener("click", async () => {
    session.undo();
    await rebuildBitmap();
    render();
  });
  el<HTMLButtonElement>("clear").addEventListener("click", () => {
    session.clearMask();
    render();
  });

  el<HTMLButtonElement>("savelog").addEventListener("click", () => {
    const blob = new Blob([serializeLog(session.log)], {
      type: "application/json",
    });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });
  el<HTMLInputElement>("loadlog").addEventListener("change", async (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (!file) return;
    const log = deserializeLog(await file.text());
    statusLine.textContent = "replaying…";
    await replaySession(log, {
      transport: new HttpTransport(serviceUrl),
      codec: new CanvasCodec(),
    });
    statusLine.textContent = "replay finished";
  });

  render();
}

setup();
