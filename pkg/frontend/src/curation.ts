// Curation workbench state. Holds the entity-type tab, the paged master
// list, the selection set, and the last error; all mutations go through
// the service, never against the client-side copies of the data.

import { ApiError, Client } from "./api.js";
import type { Master, MergeEvent } from "./types.js";

export type CurationApi = Pick<Client, "masters" | "match" | "unmatch">;

export interface WorkbenchError {
  code: string;
  message: string;
}

export class Workbench {
  entityType: string;
  masters: Master[] = [];
  readonly selection = new Set<string>();
  error: WorkbenchError | null = null;
  lastMerge: MergeEvent | null = null;
  page = 0;

  constructor(
    private readonly api: CurationApi,
    entityType: string,
    readonly pageSize = 25,
  ) {
    this.entityType = entityType;
  }

  /** Load (or reload) the master list; switching tabs resets selection. */
  async load(entityType?: string): Promise<void> {
    if (entityType !== undefined && entityType !== this.entityType) {
      this.entityType = entityType;
      this.selection.clear();
      this.error = null;
      this.lastMerge = null;
      this.page = 0;
    }
    this.masters = await this.api.masters(this.entityType);
    for (const id of [...this.selection]) {
      if (!this.masters.some((m) => m.id === id)) this.selection.delete(id);
    }
    const last = Math.max(0, this.pageCount - 1);
    if (this.page > last) this.page = last;
  }

  get pageCount(): number {
    return Math.ceil(this.masters.length / this.pageSize);
  }

  /** Masters on the current page. */
  visible(): Master[] {
    const start = this.page * this.pageSize;
    return this.masters.slice(start, start + this.pageSize);
  }

  nextPage(): void {
    if (this.page + 1 < this.pageCount) this.page += 1;
  }

  prevPage(): void {
    if (this.page > 0) this.page -= 1;
  }

  toggle(masterId: string): void {
    if (this.selection.has(masterId)) this.selection.delete(masterId);
    else this.selection.add(masterId);
  }

  /** The match button is enabled only with two or more masters selected. */
  get canMatch(): boolean {
    return this.selection.size >= 2;
  }

  /**
   * Merge the selected masters. On success the list is reloaded from the
   * service so it reflects the merged master, and the selection clears.
   * On failure the service error is kept verbatim (machine code included)
   * and the list stays exactly as it was.
   */
  async matchSelection(): Promise<MergeEvent | null> {
    if (!this.canMatch) return null;
    const ids = [...this.selection].sort();
    try {
      const event = await this.api.match(this.entityType, ids);
      this.lastMerge = event;
      this.error = null;
      this.selection.clear();
      await this.load();
      return event;
    } catch (error) {
      if (error instanceof ApiError) {
        this.error = { code: error.code, message: error.message };
        return null;
      }
      throw error;
    }
  }

  /** Undo affordance: pull one occurrence out of its master. */
  async unmatchLocal(localId: string): Promise<void> {
    try {
      await this.api.unmatch(this.entityType, localId);
      this.error = null;
      await this.load();
    } catch (error) {
      if (error instanceof ApiError) {
        this.error = { code: error.code, message: error.message };
        return;
      }
      throw error;
    }
  }
}
