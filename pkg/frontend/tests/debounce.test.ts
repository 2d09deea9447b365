import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { trailingDebounce } from "../src/debounce.js";

describe("trailing debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("delivers only the final arguments of a rapid burst", () => {
    const seen: number[] = [];
    const debounced = trailingDebounce((value: number) => seen.push(value), 200);
    for (let i = 1; i <= 25; i++) {
      debounced(i);
      vi.advanceTimersByTime(40); // faster than the 200 ms window
    }
    expect(seen).toEqual([]); // still inside the window
    vi.advanceTimersByTime(200);
    expect(seen).toEqual([25]);
  });

  it("fires once per quiet period", () => {
    const seen: number[] = [];
    const debounced = trailingDebounce((value: number) => seen.push(value), 200);
    debounced(1);
    vi.advanceTimersByTime(250);
    debounced(2);
    debounced(3);
    vi.advanceTimersByTime(250);
    expect(seen).toEqual([1, 3]);
  });

  it("flush delivers a pending call immediately", () => {
    const seen: number[] = [];
    const debounced = trailingDebounce((value: number) => seen.push(value), 200);
    debounced(9);
    debounced.flush();
    expect(seen).toEqual([9]);
    vi.advanceTimersByTime(500);
    expect(seen).toEqual([9]); // no double fire
  });

  it("cancel drops the pending call", () => {
    const seen: number[] = [];
    const debounced = trailingDebounce((value: number) => seen.push(value), 200);
    debounced(4);
    debounced.cancel();
    vi.advanceTimersByTime(500);
    expect(seen).toEqual([]);
  });
});
