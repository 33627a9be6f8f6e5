export function logsumexp(values: number[]): number {
  let max = -Infinity;
  for (const v of values) if (v > max) max = v;
  if (!isFinite(max)) return max;
  let sum = 0;
  for (const v of values) sum += Math.exp(v - max);
  return max + Math.log(sum);
}

export function logNormalize(values: number[]): number[] {
  const z = logsumexp(values);
  return values.map((v) => v - z);
}
