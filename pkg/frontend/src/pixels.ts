/** Minimal RGBA pixel model.
 *
 *  The editor treats server images as opaque base64 strings and only decodes
 *  them for pixel-level checks (undo exactness, visible-pixel diffs), so the
 *  decoder is injected: the browser entry point uses a canvas, tests use a
 *  trivial synthetic codec.  Pixels are never modified client-side.
 */

export interface RawImage {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA, length = 4 * width * height
}

export interface ImageCodec {
  decode(b64: string): Promise<RawImage>;
  encode(img: RawImage): Promise<string>;
}

export function makeImage(width: number, height: number): RawImage {
  const data = new Uint8ClampedArray(4 * width * height);
  for (let i = 3; i < data.length; i += 4) data[i] = 255;
  return { width, height, data };
}

export function cloneImage(img: RawImage): RawImage {
  return { width: img.width, height: img.height, data: img.data.slice() };
}

export function imagesEqual(a: RawImage, b: RawImage): boolean {
  if (a.width !== b.width || a.height !== b.height) return false;
  if (a.data.length !== b.data.length) return false;
  for (let i = 0; i < a.data.length; i++) {
    if (a.data[i] !== b.data[i]) return false;
  }
  return true;
}

/** Count RGB mismatches between two same-sized images over pixels where
 *  visible[y*w+x] is true.  Alpha is ignored; the service speaks RGB. */
export function countVisibleMismatches(
  a: RawImage,
  b: RawImage,
  visible: Uint8Array,
): number {
  if (a.width !== b.width || a.height !== b.height) {
    throw new Error("image dimensions differ");
  }
  let bad = 0;
  for (let p = 0; p < visible.length; p++) {
    if (!visible[p]) continue;
    const o = 4 * p;
    if (
      a.data[o] !== b.data[o] ||
      a.data[o + 1] !== b.data[o + 1] ||
      a.data[o + 2] !== b.data[o + 2]
    ) {
      bad++;
    }
  }
  return bad;
}
