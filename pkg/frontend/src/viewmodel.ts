/**
 * viewmodel.ts — the only door between views and numbers.
 *
 * Views never compute: they render exactly what these methods hand back.
 * The math is injectable so tests can stub it and assert the DOM shows the
 * stubbed values verbatim.
 */

import * as analytics from "./analytics.js";
import { AppStore } from "./store.js";

export interface GrowthMath {
  childHeightAt: typeof analytics.childHeightAt;
  interpolate: typeof analytics.interpolate;
  graphSeries: typeof analytics.graphSeries;
  silhouetteHeights: typeof analytics.silhouetteHeights;
  spanIntersection: typeof analytics.spanIntersection;
  formatCm: typeof analytics.formatCm;
}

export const defaultMath: GrowthMath = analytics;

export interface ChildOption {
  childId: string;
  selectable: boolean; // children without measurements cannot be viewed
}

export interface PictorialState {
  childLabel: string;
  referenceLabel: string;
  childPx: number;
  referencePx: number;
  maxPx: number;
  slider: { min: number; max: number; value: number };
}

export const SILHOUETTE_MAX_PX = 280;

export class ViewModel {
  constructor(
    private readonly store: AppStore,
    private readonly math: GrowthMath = defaultMath,
  ) {}

  childOptions(): ChildOption[] {
    return this.store.localChildren().map((childId) => ({
      childId,
      selectable: this.store.localMeasurements(childId).length > 0,
    }));
  }

  firstSelectableChild(): string | null {
    return this.childOptions().find((o) => o.selectable)?.childId ?? null;
  }

  /** Slider domain for one child, or null when nothing is comparable. */
  sliderDomain(childId: string): readonly [number, number] | null {
    return this.math.spanIntersection(
      this.store.localMeasurements(childId),
      this.store.localReference(),
    );
  }

  clampAge(childId: string, age: number): number {
    const domain = this.sliderDomain(childId);
    if (!domain) {
      return age;
    }
    return Math.min(Math.max(age, domain[0]), domain[1]);
  }

  pictorial(childId: string, sliderAge: number): PictorialState {
    const domain = this.sliderDomain(childId);
    if (!domain) {
      throw new analytics.NoData(`no comparable span for ${childId}`);
    }
    const age = Math.min(Math.max(sliderAge, domain[0]), domain[1]);
    const childCm = this.math.childHeightAt(this.store.localMeasurements(childId), age);
    const referenceCm = this.math.interpolate(this.store.localReference(), age);
    const pair = this.math.silhouetteHeights(childCm, referenceCm, SILHOUETTE_MAX_PX);
    return {
      childLabel: this.math.formatCm(childCm),
      referenceLabel: this.math.formatCm(referenceCm),
      childPx: pair.childPx,
      referencePx: pair.referencePx,
      maxPx: pair.maxPx,
      slider: { min: domain[0], max: domain[1], value: age },
    };
  }

  graph(childId: string): analytics.GraphSeries {
    return this.math.graphSeries(this.store.localMeasurements(childId), this.store.localReference());
  }

  /** The stored update date, shown in the staleness banner while offline. */
  storedUpdateDate(): string | null {
    return this.store.updateDate;
  }
}
