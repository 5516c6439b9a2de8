# training/train.py
# full experiment: synthetic (or converted) dataset -> 6 VAEs -> 7 classifiers -> OOD + surrogate tree
from __future__ import annotations

import os
import sys
from pathlib import Path

# Ensure we can import src.* when running as a script
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.settings import configure_logging  # noqa: E402
from src.experiment import ExperimentSettings, run_experiment  # noqa: E402

# -------- ENV / paths --------
WORKDIR    = os.getenv("CSIHAR_WORKDIR", "./runs/desk")
PRESET     = os.getenv("CSIHAR_EXPERIMENT", "desk")        # desk | full
DATASET    = os.getenv("CSIHAR_DATASET") or None            # unset: synthesize
SEED       = int(os.getenv("CSIHAR_SEED", "0"))
VAE_EPOCHS = os.getenv("CSIHAR_VAE_EPOCHS")
CLF_EPOCHS = os.getenv("CSIHAR_CLF_EPOCHS")
PLOTS      = os.getenv("CSIHAR_PLOTS", "true").lower() == "true"


def main():
    configure_logging()
    settings = ExperimentSettings.from_preset(
        PRESET,
        seed=SEED,
        dataset=DATASET,
        vae_epochs=int(VAE_EPOCHS) if VAE_EPOCHS else None,
        clf_epochs=int(CLF_EPOCHS) if CLF_EPOCHS else None,
        plots=PLOTS,
    )
    print(f"[train] preset={PRESET} workdir={WORKDIR} seed={SEED}")
    result = run_experiment(WORKDIR, settings)

    print(result.table())
    if result.ood is not None:
        print(f"[ood] mean S in={result.ood.mean_strength_in:.3f} ood={result.ood.mean_strength_ood:.3f} "
              f"auroc={result.ood.auroc:.3f}")
    if result.tree_metrics is not None:
        print(f"[tree] depth={result.tree.depth} accuracy={result.tree_metrics.accuracy:.4f}")
    print(f"[train] Reports written under {Path(WORKDIR) / 'reports'}")


if __name__ == "__main__":
    main()
