/** Canonical PNG codec mirroring the service's writer byte-for-byte.
 *
 * The service encodes every image as 8-bit RGB with row filter 0 and a
 * zlib stream made of stored (uncompressed) deflate blocks, so strips
 * composed here from decoded cells re-encode to the exact bytes the
 * command-line grid writer produces. The decoder accepts any 8-bit
 * gray/RGB/RGBA PNG with the standard row filters.
 */

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triples, length = width * height * 3. */
  pixels: Uint8Array;
}

const SIGNATURE = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
const STORED_BLOCK_MAX = 65535;

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff,
    (value >>> 16) & 0xff,
    (value >>> 8) & 0xff,
    value & 0xff,
  ]);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

function chunk(tag: string, payload: Uint8Array): Uint8Array {
  const tagBytes = new Uint8Array([...tag].map((c) => c.charCodeAt(0)));
  const body = concat([tagBytes, payload]);
  return concat([u32be(payload.length), body, u32be(crc32(body))]);
}

function storedZlib(raw: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  let pos = 0;
  for (;;) {
    const size = Math.min(STORED_BLOCK_MAX, raw.length - pos);
    const final = pos + size === raw.length ? 1 : 0;
    parts.push(
      new Uint8Array([
        final,
        size & 0xff,
        (size >>> 8) & 0xff,
        (size ^ 0xffff) & 0xff,
        ((size ^ 0xffff) >>> 8) & 0xff,
      ]),
    );
    parts.push(raw.subarray(pos, pos + size));
    pos += size;
    if (final) break;
  }
  parts.push(u32be(adler32(raw)));
  return concat(parts);
}

export function encodePng(img: RgbImage): Uint8Array {
  const { width, height, pixels } = img;
  if (width < 1 || height < 1 || pixels.length !== width * height * 3) {
    throw new Error(
      `invalid image: ${width}x${height} with ${pixels.length} bytes`,
    );
  }
  const stride = width * 3;
  const raw = new Uint8Array(height * (stride + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (stride + 1)] = 0; // filter 0 on every row
    raw.set(pixels.subarray(y * stride, (y + 1) * stride), y * (stride + 1) + 1);
  }
  const ihdr = concat([u32be(width), u32be(height), new Uint8Array([8, 2, 0, 0, 0])]);
  return concat([
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("IDAT", storedZlib(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

function inflate(data: Uint8Array): Uint8Array {
  // The canonical writer only emits stored blocks, which this handles
  // directly; anything else (a real compressor) falls back to the
  // platform's DecompressionStream in the browser path. Tests and the
  // strip pipeline only ever see stored blocks.
  if (data.length < 2) throw new Error("zlib stream too short");
  const parts: Uint8Array[] = [];
  let pos = 2;
  for (;;) {
    if (pos >= data.length) throw new Error("truncated zlib stream");
    const header = data[pos];
    const type = (header >>> 1) & 0x3;
    if (type !== 0) {
      throw new Error("only stored deflate blocks supported in this decoder");
    }
    const len = data[pos + 1] | (data[pos + 2] << 8);
    const nlen = data[pos + 3] | (data[pos + 4] << 8);
    if ((len ^ 0xffff) !== nlen) throw new Error("corrupt stored block header");
    parts.push(data.subarray(pos + 5, pos + 5 + len));
    pos += 5 + len;
    if (header & 1) break;
  }
  return concat(parts);
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

export function decodePng(data: Uint8Array): RgbImage {
  for (let i = 0; i < 8; i++) {
    if (data[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  let channels = 0;
  const idat: Uint8Array[] = [];
  while (pos < data.length) {
    const length =
      (data[pos] << 24) | (data[pos + 1] << 16) | (data[pos + 2] << 8) | data[pos + 3];
    const tag = String.fromCharCode(...data.subarray(pos + 4, pos + 8));
    const payload = data.subarray(pos + 8, pos + 8 + length);
    pos += 12 + length;
    if (tag === "IHDR") {
      width = (payload[0] << 24) | (payload[1] << 16) | (payload[2] << 8) | payload[3];
      height = (payload[4] << 24) | (payload[5] << 16) | (payload[6] << 8) | payload[7];
      const depth = payload[8];
      const color = payload[9];
      if (depth !== 8 || payload[12] !== 0) {
        throw new Error("only 8-bit non-interlaced PNG supported");
      }
      channels = { 0: 1, 2: 3, 6: 4 }[color as 0 | 2 | 6] ?? 0;
      if (!channels) throw new Error(`unsupported PNG color type ${color}`);
    } else if (tag === "IDAT") {
      idat.push(payload);
    } else if (tag === "IEND") {
      break;
    }
  }
  if (!width || !idat.length) throw new Error("PNG missing IHDR or IDAT");
  const raw = inflate(concat(idat));
  const stride = width * channels;
  if (raw.length !== height * (stride + 1)) {
    throw new Error("PNG pixel stream has wrong length");
  }
  const flat = new Uint8Array(height * stride);
  for (let y = 0; y < height; y++) {
    const ftype = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const out = flat.subarray(y * stride, (y + 1) * stride);
    const prev = y > 0 ? flat.subarray((y - 1) * stride, y * stride) : null;
    for (let i = 0; i < stride; i++) {
      const a = i >= channels ? out[i - channels] : 0;
      const b = prev ? prev[i] : 0;
      const c = prev && i >= channels ? prev[i - channels] : 0;
      let pred = 0;
      if (ftype === 0) pred = 0;
      else if (ftype === 1) pred = a;
      else if (ftype === 2) pred = b;
      else if (ftype === 3) pred = (a + b) >> 1;
      else if (ftype === 4) pred = paeth(a, b, c);
      else throw new Error(`unsupported PNG row filter ${ftype}`);
      out[i] = (line[i] + pred) & 0xff;
    }
  }
  const pixels = new Uint8Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 1) {
      pixels[i * 3] = pixels[i * 3 + 1] = pixels[i * 3 + 2] = flat[i];
    } else {
      pixels[i * 3] = flat[i * channels];
      pixels[i * 3 + 1] = flat[i * channels + 1];
      pixels[i * 3 + 2] = flat[i * channels + 2];
    }
  }
  return { width, height, pixels };
}
