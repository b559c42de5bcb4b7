/**
 * analytics.ts — the growth math behind both child views.
 *
 * This is the single place in the app that computes anything: views take
 * every displayed number from here (through the view-model), never from
 * their own arithmetic.
 */

export type Point = readonly [number, number]; // (age months, height cm)

export interface Measurement {
  ageMonths: number;
  heightCm: number;
  weightKg: number;
}

export interface GraphSeries {
  childPoints: Point[];
  referencePoints: Point[];
  ageSpan: readonly [number, number];
}

export interface SilhouettePair {
  childPx: number;
  referencePx: number;
  maxPx: number;
}

export class OutOfRange extends Error {}
export class NoData extends Error {}

/** Piecewise-linear value over ascending points; exact at every point. */
export function interpolate(points: readonly Point[], age: number): number {
  if (!points.length) {
    throw new NoData("no points");
  }
  const first = points[0][0];
  const last = points[points.length - 1][0];
  if (age < first || age > last) {
    throw new OutOfRange(`age ${age} outside [${first}, ${last}]`);
  }
  for (let i = 0; i < points.length; i++) {
    if (points[i][0] === age) {
      return points[i][1];
    }
    if (points[i][0] > age) {
      const [a0, v0] = points[i - 1];
      const [a1, v1] = points[i];
      return v0 + ((v1 - v0) * (age - a0)) / (a1 - a0);
    }
  }
  return points[points.length - 1][1];
}

export function heightPoints(measurements: readonly Measurement[]): Point[] {
  return measurements.map((m) => [m.ageMonths, m.heightCm]);
}

export function childHeightAt(measurements: readonly Measurement[], age: number): number {
  return interpolate(heightPoints(measurements), age);
}

/** The slider's domain: intersection of the child span and the knot span. */
export function spanIntersection(
  measurements: readonly Measurement[],
  knots: readonly Point[],
): readonly [number, number] | null {
  if (!measurements.length || !knots.length) {
    return null;
  }
  const lo = Math.max(measurements[0].ageMonths, knots[0][0]);
  const hi = Math.min(measurements[measurements.length - 1].ageMonths, knots[knots.length - 1][0]);
  return lo <= hi ? [lo, hi] : null;
}

export function graphSeries(measurements: readonly Measurement[], knots: readonly Point[]): GraphSeries {
  const childPoints = heightPoints(measurements);
  if (!childPoints.length) {
    throw new NoData("child has no measurements");
  }
  const lo = childPoints[0][0];
  const hi = childPoints[childPoints.length - 1][0];
  const referencePoints: Point[] = [];
  if (knots.length) {
    const rLo = Math.max(lo, knots[0][0]);
    const rHi = Math.min(hi, knots[knots.length - 1][0]);
    if (rLo <= rHi) {
      referencePoints.push([rLo, interpolate(knots, rLo)]);
      for (const [age, value] of knots) {
        if (age > rLo && age < rHi) {
          referencePoints.push([age, value]);
        }
      }
      if (rHi > rLo) {
        referencePoints.push([rHi, interpolate(knots, rHi)]);
      }
    }
  }
  return { childPoints, referencePoints, ageSpan: [lo, hi] };
}

/** Scale both heights into pixels; the taller one fills maxPx exactly. */
export function silhouetteHeights(childCm: number, referenceCm: number, maxPx: number): SilhouettePair {
  for (const v of [childCm, referenceCm, maxPx]) {
    if (!Number.isFinite(v) || v <= 0) {
      throw new RangeError(`positive finite values required, got ${v}`);
    }
  }
  if (childCm >= referenceCm) {
    return { childPx: maxPx, referencePx: (maxPx * referenceCm) / childCm, maxPx };
  }
  return { childPx: (maxPx * childCm) / referenceCm, referencePx: maxPx, maxPx };
}

/** Centimeter labels show one decimal; all internal math stays full precision. */
export function formatCm(value: number): string {
  return `${value.toFixed(1)} cm`;
}
