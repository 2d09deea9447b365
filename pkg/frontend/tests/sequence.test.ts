import { describe, expect, it } from "vitest";

import { LatestOnly } from "../src/sequence.js";

function deferred<T>(): { promise: Promise<T>; resolve: (value: T) => void } {
  let resolve!: (value: T) => void;
  const promise = new Promise<T>((r) => (resolve = r));
  return { promise, resolve };
}

describe("latest-wins gate", () => {
  it("discards a slow response that was superseded", async () => {
    const gate = new LatestOnly<string>();
    const delivered: string[] = [];
    const slow = deferred<string>();
    const fast = deferred<string>();

    const first = gate.run(() => slow.promise, (v) => delivered.push(v));
    const second = gate.run(() => fast.promise, (v) => delivered.push(v));

    fast.resolve("new");
    await second;
    slow.resolve("stale");
    await first;

    expect(delivered).toEqual(["new"]);
  });

  it("delivers in-order responses normally", async () => {
    const gate = new LatestOnly<number>();
    const delivered: number[] = [];
    await gate.run(async () => 1, (v) => delivered.push(v));
    await gate.run(async () => 2, (v) => delivered.push(v));
    expect(delivered).toEqual([1, 2]);
  });

  it("only the most recent of many concurrent requests lands", async () => {
    const gate = new LatestOnly<number>();
    const delivered: number[] = [];
    const handles = Array.from({ length: 10 }, () => deferred<number>());
    const runs = handles.map((h, i) => gate.run(() => h.promise, (v) => delivered.push(v)));
    // resolve out of order: 3, 9 (the latest), then the rest
    handles[3].resolve(3);
    handles[9].resolve(9);
    for (const [i, h] of handles.entries()) h.resolve(i);
    await Promise.all(runs);
    expect(delivered).toEqual([9]);
  });
});
