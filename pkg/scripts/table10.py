"""Recompute the case-study measurement table from its pixel counts.

Prints each cell's pixel-derived mm next to the listed value, then the
percentage-error summaries against the laser-scan references.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from crackmeter.measure import CrackMeasurement, percentage_error  # noqa: E402
from crackmeter.rectify import PixelScale  # noqa: E402
from oracles import TABLE10  # noqa: E402

METRICS = ("total_width", "total_height", "max_transverse_width")


def main():
    print(f"{'cell':>5} {'metric':>22} {'px':>5} {'listed':>7} {'computed':>9}")
    for cell, s, image, _ in TABLE10:
        m = CrackMeasurement(cell, *(px for _, px in image), PixelScale(s, s))
        for k, name in enumerate(METRICS):
            listed, px = image[k]
            flag = "" if m.mm(name) == listed else "  <- differs"
            print(f"{cell:>5} {name:>22} {px:>5} {listed:>7} {m.mm(name):>9}{flag}")
    print()
    for k, name in enumerate(METRICS):
        listed = percentage_error([(tls[k], img[k][0]) for _, _, img, tls in TABLE10])
        computed = percentage_error(
            [(tls[k], CrackMeasurement(c, *(p for _, p in img), PixelScale(s, s)).mm(name)) for c, s, img, tls in TABLE10]
        )
        print(f"{name:>22}: MAPE {listed.mape:6.3f} (signed {listed.mpe_signed:6.3f}) from listed mm, "
              f"{computed.mape:6.3f} from pixels")


if __name__ == "__main__":
    main()
