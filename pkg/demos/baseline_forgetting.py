"""Show catastrophic forgetting in the dense baseline on permuted MNIST.

A 784-512-10 ReLU network trained with AdaDelta learns each new pixel
permutation quickly — and overwrites the previous ones while doing so.
The degradation profile makes the erosion visible task by task.

Needs the MNIST IDX files (see README). Uses 10k training images per task
to finish in about half a minute; the effect deepens at full scale.

Run:
    python3 demos/baseline_forgetting.py [data_dir]
"""

from __future__ import annotations

import os
import sys

import numpy as np

from colanet_cl.baseline import MlpAdapter
from colanet_cl.clbench import compute_report, render_summary, run_sequence
from colanet_cl.dataset import make_permuted_stream


def main() -> None:
    data_dir = (
        sys.argv[1]
        if len(sys.argv) > 1
        else os.environ.get("COLANET_DATA_DIR", "/root/data/mnist")
    )
    n_tasks = 4
    print(f"Loading MNIST from {data_dir}; {n_tasks} permuted tasks ...")
    tasks = make_permuted_stream(
        n_tasks, base_seed=1, data_dir=data_dir, train_count=10000
    )

    adapter = MlpAdapter(seed=1)
    profile = run_sequence(adapter, tasks)

    print("\nDegradation profile (% accuracy; rows: after task k):")
    header = "            " + "  ".join(f"task {j + 1}" for j in range(n_tasks))
    print(header)
    for k, row in enumerate(profile.a * 100.0, start=1):
        cells = "  ".join(
            "   -  " if np.isnan(v) else f"{v:6.2f}" for v in row
        )
        print(f"after {k}:    {cells}")

    print()
    print(render_summary(compute_report(profile)))
    drop = (profile.a[0, 0] - profile.a[n_tasks - 1, 0]) * 100.0
    print(f"\nTask 1 lost {drop:.2f} points while tasks 2-{n_tasks} were learned.")


if __name__ == "__main__":
    main()
