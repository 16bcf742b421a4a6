/**
 * Trailing debounce with request cancellation: at most one request in flight,
 * slider movement aborts the previous fetch instead of queueing behind it.
 */

export type Fetcher<T> = (signal: AbortSignal) => Promise<T>;

export class DebouncedFetcher<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private controller: AbortController | null = null;
  private generation = 0;

  constructor(
    private readonly delayMs: number,
    private readonly onResult: (value: T) => void,
    private readonly onError: (err: unknown) => void,
  ) {}

  /** Schedule a fetch; earlier pending or in-flight requests are dropped. */
  schedule(fetcher: Fetcher<T>): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire(fetcher);
    }, this.delayMs);
  }

  /** Run immediately (still cancelling anything in flight). */
  fire(fetcher: Fetcher<T>): void {
    if (this.controller !== null) {
      this.controller.abort();
    }
    const controller = new AbortController();
    this.controller = controller;
    const gen = ++this.generation;
    fetcher(controller.signal).then(
      (value) => {
        if (gen === this.generation) {
          this.controller = null;
          this.onResult(value);
        }
      },
      (err: unknown) => {
        if (gen !== this.generation) return;
        this.controller = null;
        if (err instanceof DOMException && err.name === "AbortError") return;
        this.onError(err);
      },
    );
  }

  get inFlight(): boolean {
    return this.controller !== null;
  }

  cancel(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.controller !== null) {
      this.controller.abort();
      this.controller = null;
    }
    this.generation++;
  }
}
