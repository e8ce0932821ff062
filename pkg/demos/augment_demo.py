"""Seeded augmentation of an (image, mask) pair and the empirical rate of each step.

Run: python3 demos/augment_demo.py [out_dir]
"""
import sys
import tempfile
from collections import Counter
from pathlib import Path

from ulprint.augment import AugmentConfig, augment_pair, pair_rng
from ulprint.imagecore import save_gray, save_mask
from ulprint.synthetic import grating_sample


def main(out_dir: Path) -> None:
    cfg = AugmentConfig()
    img, mask = grating_sample(300, seed=0, index=0)
    for k in range(4):
        trace = []
        a, m = augment_pair(img, mask, cfg, pair_rng(42, k), trace)
        print(f"draw {k}: {trace}")
        save_gray(a, out_dir / f"aug{k}.png")
        save_mask(m, out_dir / f"aug{k}.mask.png")

    n = 2000
    seen = Counter()
    for i in range(n):
        trace = []
        augment_pair(img, mask, cfg, pair_rng(1, i), trace)
        names = {op[0] if isinstance(op, tuple) else op for op in trace}
        seen["geom"] += bool(names & {"hflip", "vflip", "rot90"})
        seen.update(names & {"rrc", "cutout", "lines", "letters"})
    configured = dict(geom=cfg.p_geom, rrc=cfg.p_rrc, cutout=cfg.p_cutout, lines=cfg.p_lines,
                      letters=cfg.p_letters)
    for key, p in configured.items():
        print(f"{key:8s} configured {p:.2f}  observed {seen[key] / n:.3f}")
    print(f"samples written to {out_dir}")


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="ulprint_aug_"))
    out.mkdir(parents=True, exist_ok=True)
    main(out)
