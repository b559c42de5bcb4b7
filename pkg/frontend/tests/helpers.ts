// Test doubles: in-memory Storage and a fake endpoint speaking the same
// field-level protocol as the real service.

import { Action, AuthFailed, Endpoint, NetworkFailure, ProtocolFailure } from "../src/api.js";
import { Measurement, Point } from "../src/analytics.js";
import { Fields, fieldValue } from "../src/wire.js";
import { StorageLike } from "../src/store.js";

export const T1 = "2015-08-01T00:00:00Z";
export const T2 = "2015-09-01T00:00:00Z";

export class MemoryStorage implements StorageLike {
  private readonly map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.has(key) ? this.map.get(key)! : null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, String(value));
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export interface FixtureData {
  updateDate: string;
  tokens: Record<string, string>;
  families: Record<string, string[]>;
  measurements: Record<string, Measurement[]>;
  knots: Point[];
}

export function referenceHeight(age: number): number {
  return Math.round((50 + 128 * Math.pow(age / 240, 0.7)) * 10) / 10;
}

/** Same shape as the server-side fixture cohort: 3 mothers, 5 children. */
export function makeFixture(updateDate = T1): FixtureData {
  const families = {
    M001: ["C001", "C002"],
    M002: ["C003", "C004"],
    M003: ["C005"],
  };
  const scale: Record<string, number> = { C001: 0.98, C002: 1.03, C003: 1.0, C004: 0.95, C005: 1.05 };
  const ages = [0, 3, 6, 9, 12, 18, 24, 36];
  const measurements: Record<string, Measurement[]> = {};
  for (const children of Object.values(families)) {
    for (const child of children) {
      measurements[child] = ages.map((age) => ({
        ageMonths: age,
        heightCm: Math.round(referenceHeight(age) * scale[child] * 10) / 10,
        weightKg: Math.round((3.5 + 0.35 * age) * 10) / 10,
      }));
    }
  }
  const knots: Point[] = [];
  for (let age = 0; age <= 240; age += 10) {
    knots.push([age, referenceHeight(age)]);
  }
  return {
    updateDate,
    tokens: { "TK-0001": "M001", "TK-0002": "M002", "TK-0003": "M003" },
    families,
    measurements,
    knots,
  };
}

export class FakeServer implements Endpoint {
  recorded: Action[] = [];
  down = false;

  constructor(public data: FixtureData) {}

  private auth(token?: string | null): string {
    const motherId = token ? this.data.tokens[token] : undefined;
    if (!motherId || !(motherId in this.data.families)) {
      throw new AuthFailed("unknown token");
    }
    return motherId;
  }

  async call(action: Action, params: Fields = [], token?: string | null): Promise<Fields> {
    this.recorded.push(action);
    if (this.down) {
      throw new NetworkFailure("endpoint unreachable");
    }
    switch (action) {
      case "Authenticate":
        return [["ok", "true"], ["motherId", this.auth(token)]];
      case "GetLastUpdate":
        this.auth(token);
        return [["updateDate", this.data.updateDate]];
      case "GetChildren":
        return this.data.families[this.auth(token)].map((c, i) => [`Child.${i}`, c]);
      case "GetMeasurements": {
        const motherId = this.auth(token);
        const childId = fieldValue(params, "childId");
        const owner = Object.entries(this.data.families).find(([, kids]) => kids.includes(childId));
        if (!owner) {
          throw new ProtocolFailure("Client.NotFound: unknown child");
        }
        if (owner[0] !== motherId) {
          throw new ProtocolFailure("Client.AccessDenied: not yours");
        }
        const fields: Fields = [];
        this.data.measurements[childId].forEach((m, i) => {
          fields.push([`Measurement.${i}.ageMonths`, String(m.ageMonths)]);
          fields.push([`Measurement.${i}.heightCm`, String(m.heightCm)]);
          fields.push([`Measurement.${i}.weightKg`, String(m.weightKg)]);
        });
        return fields;
      }
      case "GetReferenceCurve": {
        this.auth(token);
        const fields: Fields = [];
        this.data.knots.forEach(([age, cm], i) => {
          fields.push([`Knot.${i}.ageMonths`, String(age)]);
          fields.push([`Knot.${i}.heightCm`, String(cm)]);
        });
        return fields;
      }
      case "RequestIdRecovery":
        return [["requestId", "1"]];
    }
  }
}
