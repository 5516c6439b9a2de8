import argparse
import json
import os
import sys
from pathlib import Path
from typing import Dict, List

from src.common.utils import sha256_file
from src.experiment import ExperimentSettings, run_experiment
from src.settings import configure_logging

# manifests carry created_at, so they differ between rounds by construction
SKIP_NAMES = {"experiment.json"}


# -----------------------------
# Artifact fingerprints
# -----------------------------
def fingerprint(workdir: Path) -> Dict[str, str]:
    out = {}
    for sub in ("models", "reports"):
        root = workdir / sub
        if not root.exists():
            continue
        for p in sorted(root.rglob("*")):
            if p.is_file() and p.name not in SKIP_NAMES and p.suffix != ".joblib":
                out[str(p.relative_to(workdir))] = sha256_file(p)
    return out


def compare(base: Dict[str, str], cur: Dict[str, str]) -> List[str]:
    keys = sorted(set(base) | set(cur))
    return [k for k in keys if base.get(k) != cur.get(k)]


# -----------------------------
# Main
# -----------------------------
def main():
    ap = argparse.ArgumentParser(description="Run the same experiment several times and check artifacts are byte-identical.")
    ap.add_argument("--workdir", default="./runs/consistency")
    ap.add_argument("--preset", default="desk")
    ap.add_argument("--rounds", type=int, default=2, help="How many repeats (default 2)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--vae-epochs", type=int, default=None)
    ap.add_argument("--clf-epochs", type=int, default=None)
    ap.add_argument("--out", default=None, help="summary JSON (default <workdir>/consistency_summary.json)")
    args = ap.parse_args()

    configure_logging()
    settings = ExperimentSettings.from_preset(args.preset, seed=args.seed, vae_epochs=args.vae_epochs,
                                              clf_epochs=args.clf_epochs, plots=False)
    workdir = Path(args.workdir)

    prints: List[Dict[str, str]] = []
    accuracies: List[Dict[str, float]] = []
    for r in range(args.rounds):
        round_dir = workdir / f"round-{r + 1}"
        print(f"[round] {r + 1}/{args.rounds} -> {round_dir}")
        result = run_experiment(round_dir, settings)
        prints.append(fingerprint(round_dir))
        accuracies.append({k: v.accuracy for k, v in result.metrics.items()})

    rows = []
    for r in range(1, args.rounds):
        diff = compare(prints[0], prints[r])
        rows.append({"round": r + 1, "artifacts": len(prints[r]), "mismatched": diff,
                     "accuracy_equal": accuracies[r] == accuracies[0]})

    print("\n=== Consistency summary ===")
    print(f"rounds: {args.rounds}  artifacts per round: {len(prints[0])}")
    failed = False
    for row in rows:
        status = "identical" if not row["mismatched"] and row["accuracy_equal"] else "DIFFERS"
        failed |= status != "identical"
        print(f"- round {row['round']} vs round 1: {status}")
        for name in row["mismatched"][:10]:
            print(f"    {name}")

    summary_path = args.out or os.path.join(args.workdir, "consistency_summary.json")
    Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
    with open(summary_path, "w", encoding="utf-8") as f:
        json.dump({"rounds": rows, "round1": prints[0] if prints else {}}, f, ensure_ascii=False, indent=2)
    print(f"\nSaved summary to: {summary_path}")
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
