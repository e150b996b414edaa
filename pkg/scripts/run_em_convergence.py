"""Total patch energy after each EM round of one outer iteration.

Prints one row per EM round; with ``--lam 1`` the curve is monotone.
"""

import argparse

from ogmm_deblur.blur_synth import add_gaussian_noise, apply_scene, preset_scene, two_view_pair
from ogmm_deblur.ogmm import OgmmConfig
from ogmm_deblur.pipeline import PipelineConfig, deblur


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--em-iters", type=int, default=10)
    ap.add_argument("--lam", type=float, default=0.775)
    ap.add_argument("--blur-type", type=int, default=1)
    args = ap.parse_args()

    sharp, sharp_b, _ = two_view_pair((args.size, args.size), seed=0)
    blurred = apply_scene(sharp, preset_scene(args.blur_type, sharp.shape))
    noisy = add_gaussian_noise(sharp_b, 10.0, seed=1)
    cfg = PipelineConfig(
        outer_iterations=1, detail=None, ogmm=OgmmConfig(lam=args.lam, em_iterations=args.em_iters)
    )
    _, report = deblur(blurred, noisy, cfg)
    energies = report.iterations[0].em_energies
    for i, e in enumerate(energies):
        print(f"{i:3d} {e:14.3f} {e - energies[-1]:12.3f}")


if __name__ == "__main__":
    main()
