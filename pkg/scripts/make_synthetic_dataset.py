"""Write a synthetic expert/novice dataset (plus one held-out novice) to disk.

    python scripts/make_synthetic_dataset.py out/synth --experts 6 --novices 6 --seed 0
"""
import argparse
from pathlib import Path

from dexengine.synth import generate_dataset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", type=Path)
    ap.add_argument("--experts", type=int, default=6)
    ap.add_argument("--novices", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--stitches", type=int, default=2, help="suture repetitions per recording")
    args = ap.parse_args()
    metas = generate_dataset(args.root / "dataset", args.experts, args.novices, args.seed,
                             stitches=args.stitches, holdout_dir=args.root / "holdout")
    for m in metas:
        print(f"{m.recording_id:<14}{m.group.value:<8}{m.frame_count:>6} frames")
    print(f"dataset: {args.root / 'dataset'}\nholdout: {args.root / 'holdout' / 'rec_holdout'}")


if __name__ == "__main__":
    main()
