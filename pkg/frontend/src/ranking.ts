/** Top-2 ranking interaction over blinded elaboration candidates.
 *
 * Candidates arrive from the server in a seeded random order under opaque
 * aliases; the board preserves that order, never learns system identities,
 * and enforces exactly two distinct picks per criterion, with the two
 * criteria ranked independently.
 */

import type { ElabBoard, RankingBody } from "./types.js";

interface CriterionPicks {
  first: string | null;
  second: string | null;
}

export class RankingBoard {
  private picks = new Map<string, CriterionPicks>();

  constructor(readonly board: ElabBoard) {
    for (const criterion of board.criteria) {
      this.picks.set(criterion, { first: null, second: null });
    }
  }

  /** Candidates exactly as the server ordered them (no client shuffle). */
  candidates(): { alias: string; text: string }[] {
    return this.board.candidates.map((c) => ({ alias: c.alias, text: c.text }));
  }

  private validAlias(alias: string): boolean {
    return this.board.candidates.some((c) => c.alias === alias);
  }

  pick(criterion: string, rank: "first" | "second", alias: string): boolean {
    const slot = this.picks.get(criterion);
    if (!slot || !this.validAlias(alias)) return false;
    const other = rank === "first" ? slot.second : slot.first;
    if (other === alias) return false; // same output picked twice: blocked
    slot[rank] = alias;
    return true;
  }

  picksFor(criterion: string): CriterionPicks {
    const slot = this.picks.get(criterion);
    return slot ? { ...slot } : { first: null, second: null };
  }

  isComplete(criterion?: string): boolean {
    if (criterion !== undefined) {
      const slot = this.picks.get(criterion);
      return !!slot && slot.first !== null && slot.second !== null && slot.first !== slot.second;
    }
    return this.board.criteria.every((c) => this.isComplete(c));
  }

  /** One submission per criterion; aliases only, no system identities. */
  buildSubmissions(): RankingBody[] {
    if (!this.isComplete()) {
      throw new Error("both criteria need two distinct picks");
    }
    return this.board.criteria.map((criterion) => {
      const slot = this.picks.get(criterion)!;
      return {
        instance_id: this.board.instance_id,
        criterion,
        first_alias: slot.first!,
        second_alias: slot.second!,
      };
    });
  }
}
