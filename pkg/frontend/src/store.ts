/**
 * store.ts — offline-first local store plus the delete-and-reload sync engine.
 *
 * Mirrors the device-client semantics: compare update dates, and when the
 * server is newer, empty the store first and install the freshly fetched
 * slice in one write. A failed refresh leaves the store empty-with-no-date,
 * never half-populated. The server is never written to.
 */

import { AuthFailed, Endpoint } from "./api.js";
import { Measurement, Point } from "./analytics.js";
import { Fields, fieldValue } from "./wire.js";

const STORE_KEY = "bib.store";
const TOKEN_KEY = "bib.token";

export type StorageLike = Pick<Storage, "getItem" | "setItem" | "removeItem">;

export interface StoreData {
  updateDate: string;
  motherId: string;
  children: string[];
  measurements: Record<string, Measurement[]>;
  reference: Point[];
}

export type SyncKind = "InitialLoad" | "NoChange" | "FullRefresh";

export interface SyncOutcome {
  kind: SyncKind;
  newUpdateDate: string;
}

export class BusySyncing extends Error {}
export class EmptyStore extends Error {}
export class ProtocolError extends Error {}

const TIMESTAMP_RE = /^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$/;

function indexed(fields: Fields, prefix: string): Map<number, Map<string, string>> {
  const groups = new Map<number, Map<string, string>>();
  const re = new RegExp(`^${prefix}\\.(\\d+)(?:\\.([A-Za-z]+))?$`);
  for (const [name, value] of fields) {
    const m = re.exec(name);
    if (!m) {
      throw new ProtocolError(`unexpected field ${name}`);
    }
    const idx = Number(m[1]);
    if (!groups.has(idx)) {
      groups.set(idx, new Map());
    }
    groups.get(idx)!.set(m[2] ?? "", value);
  }
  return groups;
}

function numeric(row: Map<string, string>, part: string): number {
  const raw = row.get(part);
  const value = raw === undefined ? NaN : Number(raw);
  if (!Number.isFinite(value)) {
    throw new ProtocolError(`bad numeric field ${part}: ${raw}`);
  }
  return value;
}

export class AppStore {
  private data: StoreData | null = null;
  private syncing = false;

  constructor(private readonly backend: StorageLike) {
    const raw = backend.getItem(STORE_KEY);
    if (raw !== null) {
      this.data = JSON.parse(raw) as StoreData;
    }
  }

  // -- remembered token -----------------------------------------------------

  get rememberedToken(): string | null {
    return this.backend.getItem(TOKEN_KEY);
  }

  rememberToken(token: string): void {
    this.backend.setItem(TOKEN_KEY, token);
  }

  forgetToken(): void {
    this.backend.removeItem(TOKEN_KEY);
  }

  // -- offline reads ----------------------------------------------------------

  get isPopulated(): boolean {
    return this.data !== null;
  }

  get updateDate(): string | null {
    return this.data?.updateDate ?? null;
  }

  localChildren(): string[] {
    if (!this.data) {
      throw new EmptyStore("no synced data");
    }
    return [...this.data.children];
  }

  localMeasurements(childId: string): Measurement[] {
    if (!this.data) {
      throw new EmptyStore("no synced data");
    }
    return [...(this.data.measurements[childId] ?? [])];
  }

  localReference(): Point[] {
    if (!this.data) {
      throw new EmptyStore("no synced data");
    }
    return [...this.data.reference];
  }

  // -- sync -------------------------------------------------------------------

  private persist(): void {
    if (this.data) {
      this.backend.setItem(STORE_KEY, JSON.stringify(this.data));
    } else {
      this.backend.removeItem(STORE_KEY);
    }
  }

  private async fetchStamp(endpoint: Endpoint, token: string): Promise<string> {
    const stamp = fieldValue(await endpoint.call("GetLastUpdate", [], token), "updateDate");
    if (!TIMESTAMP_RE.test(stamp)) {
      throw new ProtocolError(`bad updateDate: ${stamp}`);
    }
    return stamp;
  }

  private async fetchSlice(endpoint: Endpoint, token: string, motherId: string, stamp: string): Promise<StoreData> {
    const childGroups = indexed(await endpoint.call("GetChildren", [], token), "Child");
    const children = [...childGroups.keys()].sort((a, b) => a - b).map((i) => {
      const value = childGroups.get(i)!.get("");
      if (value === undefined) {
        throw new ProtocolError("bad child field");
      }
      return value;
    });

    const measurements: Record<string, Measurement[]> = {};
    for (const childId of children) {
      const rows = indexed(
        await endpoint.call("GetMeasurements", [["childId", childId]], token),
        "Measurement",
      );
      measurements[childId] = [...rows.keys()].sort((a, b) => a - b).map((i) => ({
        ageMonths: numeric(rows.get(i)!, "ageMonths"),
        heightCm: numeric(rows.get(i)!, "heightCm"),
        weightKg: numeric(rows.get(i)!, "weightKg"),
      }));
    }

    const knotRows = indexed(await endpoint.call("GetReferenceCurve", [], token), "Knot");
    const reference: Point[] = [...knotRows.keys()].sort((a, b) => a - b).map((i) => [
      numeric(knotRows.get(i)!, "ageMonths"),
      numeric(knotRows.get(i)!, "heightCm"),
    ]);

    return { updateDate: stamp, motherId, children, measurements, reference };
  }

  /**
   * Run one sync. ISO-8601 UTC stamps compare correctly as strings, so the
   * update-date test is plain lexicographic comparison.
   */
  async sync(endpoint: Endpoint, token: string): Promise<SyncOutcome> {
    if (this.syncing) {
      throw new BusySyncing("sync already in flight");
    }
    this.syncing = true;
    try {
      const wasPopulated = this.isPopulated;
      const motherId = fieldValue(await endpoint.call("Authenticate", [], token), "motherId");
      let serverDate = await this.fetchStamp(endpoint, token);

      if (this.data && serverDate <= this.data.updateDate) {
        return { kind: "NoChange", newUpdateDate: this.data.updateDate };
      }

      // Delete phase: observably empty until the full slice lands at once.
      this.data = null;
      this.persist();

      for (let attempt = 0; attempt < 5; attempt++) {
        const slice = await this.fetchSlice(endpoint, token, motherId, serverDate);
        const checkDate = await this.fetchStamp(endpoint, token);
        if (checkDate === serverDate) {
          this.data = slice;
          this.persist();
          return {
            kind: wasPopulated ? "FullRefresh" : "InitialLoad",
            newUpdateDate: serverDate,
          };
        }
        serverDate = checkDate; // a newer snapshot landed mid-fetch; start over
      }
      throw new ProtocolError("dataset kept changing during refresh");
    } finally {
      this.syncing = false;
    }
  }
}

export { AuthFailed };
