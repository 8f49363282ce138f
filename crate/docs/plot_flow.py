"""Plot the output of `gaplab flow`.

    gaplab --out out flow
    python docs/plot_flow.py out 2
"""

import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {key: [float(r[key]) for r in rows] for key in rows[0]}


def main():
    root = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
    k = sys.argv[2] if len(sys.argv) > 2 else "2"
    final = read(root / "flow" / f"final_k{k}.csv")
    history = read(root / "flow" / f"history_k{k}.csv")

    fig, (left, right) = plt.subplots(1, 2, figsize=(11, 4))

    left.plot(final["z"], final["psi_k0"], "--", label="initial modulus")
    left.plot(final["z"], final["psi"], label="final state")
    left.plot(final["z"], final["tilde_psi_k0"], ":", label="stationary profile")
    left.set_xlabel("z")
    left.set_title(f"k = {k}")
    left.legend()

    right.semilogy(history["t"], history["sup_error"])
    right.set_xlabel("t")
    right.set_ylabel("sup error")
    right.set_title("convergence")

    fig.tight_layout()
    out = root / f"flow_k{k}.png"
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
