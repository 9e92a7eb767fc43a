"""Write the sample and block files under data/ from the closed-form reference fields."""
import argparse
import os

from sncert.samples import serialize_block, serialize_samples
from sncert.synthetic import (
    ATTRACTOR_BLOCK,
    DISK2D_BLOCK,
    INTERVAL1D_BLOCK,
    attractor_samples,
    disk2d_samples,
    interval1d_samples,
)

DATASETS = {
    "interval1d": (interval1d_samples, INTERVAL1D_BLOCK),
    "disk2d": (disk2d_samples, DISK2D_BLOCK),
    "attractor": (attractor_samples, ATTRACTOR_BLOCK),
}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    parser.add_argument("--step", type=float, default=0.1, help="sample lattice spacing")
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name, (make, spec) in DATASETS.items():
        svf = make(args.step)
        with open(os.path.join(args.out, f"{name}.samples"), "w") as fh:
            fh.write(f"# {name}: {len(svf)} samples on the block boundary, the slab at lambda=0 and lambda=1\n")
            fh.write(serialize_samples(svf))
        with open(os.path.join(args.out, f"{name}.block"), "w") as fh:
            fh.write(serialize_block(spec))
        print(f"{name}: {len(svf)} samples")


if __name__ == "__main__":
    main()
