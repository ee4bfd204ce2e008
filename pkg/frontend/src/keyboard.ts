/**
 * Global key bindings for the review loop.
 *
 * 1-5  select rank          c  toggle "concepts present"
 * Enter submit / finalize   p  toggle "placement reasonable"
 * s    stats view           a  toggle "artifact free"
 * r    retry after an error
 */

import type { CriterionKey } from "./api.js";
import type { Screen } from "./state.js";

/** What the key handler needs from the controller. */
export interface KeyTarget {
  state: { screen: Screen };
  selectRank(rank: number): void;
  toggleCriterion(key: CriterionKey): void;
  submit(): unknown;
  finalize(): unknown;
  toggleStats(): unknown;
  retry(): unknown;
}

export function bindKeys(target: Window, controller: KeyTarget): () => void {
  const onKeyDown = (event: KeyboardEvent) => {
    // Leave typing contexts and browser shortcuts alone.
    if (
      event.target instanceof HTMLInputElement ||
      event.target instanceof HTMLTextAreaElement
    ) {
      return;
    }
    if (event.ctrlKey || event.metaKey || event.altKey) {
      return;
    }

    switch (event.key) {
      case "1":
      case "2":
      case "3":
      case "4":
      case "5":
        event.preventDefault();
        controller.selectRank(Number(event.key));
        break;
      case "c":
        event.preventDefault();
        controller.toggleCriterion("concepts_present");
        break;
      case "p":
        event.preventDefault();
        controller.toggleCriterion("placement_reasonable");
        break;
      case "a":
        event.preventDefault();
        controller.toggleCriterion("artifact_free");
        break;
      case "Enter":
        event.preventDefault();
        if (controller.state.screen === "done") {
          void controller.finalize();
        } else {
          void controller.submit();
        }
        break;
      case "s":
        event.preventDefault();
        void controller.toggleStats();
        break;
      case "r":
        event.preventDefault();
        void controller.retry();
        break;
      default:
        break;
    }
  };

  target.addEventListener("keydown", onKeyDown);
  return () => target.removeEventListener("keydown", onKeyDown);
}
