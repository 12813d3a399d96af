// Row-major run-length coding, alternating runs starting with the zero run.
// Mirrors the service's segment-mask transport format exactly.

export function rleEncode(bits: Uint8Array | boolean[]): number[] {
  const runs: number[] = [];
  let current = false;
  let count = 0;
  for (let i = 0; i < bits.length; i++) {
    const bit = Boolean(bits[i]);
    if (bit === current) {
      count += 1;
    } else {
      runs.push(count);
      current = bit;
      count = 1;
    }
  }
  runs.push(count);
  return runs;
}

export function rleDecode(runs: number[], h: number, w: number): Uint8Array {
  const total = runs.reduce((a, b) => a + b, 0);
  if (total !== h * w) {
    throw new Error(`RLE decodes to ${total} bits, expected ${h * w}`);
  }
  const out = new Uint8Array(h * w);
  let pos = 0;
  let value = 0;
  for (const run of runs) {
    if (value) out.fill(1, pos, pos + run);
    pos += run;
    value ^= 1;
  }
  return out;
}
