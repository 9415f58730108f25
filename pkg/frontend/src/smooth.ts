/**
 * Causal moving average with linearly decaying weights, newest heaviest:
 * the lag-k weight is (window - k), renormalized over the covered prefix so
 * a constant series is a fixed point.  Mirrors the simulator's smoothing.
 */
export function smooth(series: readonly number[], window = 100): number[] {
  if (series.length === 0) {
    throw new Error("cannot smooth an empty series");
  }
  if (window < 1 || !Number.isInteger(window)) {
    throw new Error("window must be a positive integer");
  }
  const out = new Array<number>(series.length);
  for (let i = 0; i < series.length; i++) {
    const k = Math.min(i + 1, window);
    let acc = 0;
    let norm = 0;
    for (let lag = 0; lag < k; lag++) {
      const w = window - lag;
      acc += w * series[i - lag];
      norm += w;
    }
    out[i] = acc / norm;
  }
  return out;
}
