/** Trailing-edge debouncer: calls land no sooner than `delayMs` after the
 * most recent invocation, and the final invocation's arguments are always
 * the ones delivered. Nothing is ever dropped from the trailing edge, so
 * the last slider position always reaches the network.
 */

export const DEBOUNCE_MS = 200;

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  /** Deliver a pending trailing call immediately, if any. */
  flush(): void;
  cancel(): void;
}

export function trailingDebounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs: number = DEBOUNCE_MS,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: A | null = null;

  const fire = () => {
    timer = null;
    if (pending !== null) {
      const args = pending;
      pending = null;
      fn(...args);
    }
  };

  const debounced = (...args: A) => {
    pending = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(fire, delayMs);
  };
  debounced.flush = () => {
    if (timer !== null) {
      clearTimeout(timer);
      fire();
    }
  };
  debounced.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    pending = null;
  };
  return debounced;
}
