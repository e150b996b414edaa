"""Write a synthetic two-view sharp pair plus its ground-truth flow.

The outputs feed ``ogmm-deblur synth`` and ``ogmm-deblur deblur --gt-flo``.
"""

import argparse
from pathlib import Path

from ogmm_deblur.blur_synth import two_view_pair
from ogmm_deblur.image_core import save_image
from ogmm_deblur.optical_flow import write_flo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--size", type=int, nargs=2, default=(128, 128), metavar=("H", "W"))
    ap.add_argument("--shift", type=int, nargs=2, default=(2, 1), metavar=("DX", "DY"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    a, b, gt = two_view_pair(tuple(args.size), tuple(args.shift), args.seed)
    save_image(a, args.out_dir / "sharp_a.png")
    save_image(b, args.out_dir / "sharp_b.png")
    write_flo(gt, args.out_dir / "gt.flo")
    print(f"wrote sharp_a.png, sharp_b.png, gt.flo to {args.out_dir}")


if __name__ == "__main__":
    main()
