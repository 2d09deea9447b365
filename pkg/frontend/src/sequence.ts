/** Latest-wins request gate. Each dispatch gets a monotonically increasing
 * sequence number; a response is delivered only if it belongs to the most
 * recently dispatched request, so out-of-order completions can never paint
 * a stale image over a newer one.
 */

export class LatestOnly<T> {
  private nextSeq = 0;

  /** Number of the most recently dispatched request (-1 before the first). */
  get current(): number {
    return this.nextSeq - 1;
  }

  async run(task: () => Promise<T>, deliver: (value: T) => void): Promise<void> {
    const seq = this.nextSeq++;
    const value = await task();
    if (seq === this.current) {
      deliver(value);
    }
  }
}
