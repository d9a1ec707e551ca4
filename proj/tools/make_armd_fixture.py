"""Regenerates tests/data/armd_patterns.csv: 240 subjects, four visits
(weeks 4, 12, 24, 52), two arms and a four-level baseline lesion score, with
missingness patterns in the frequencies of the ARMD trial overview."""

import csv
import math
import random
import sys

PATTERNS = [
    ("OOOO", 188),
    ("OOOM", 24),
    ("OOMM", 8),
    ("OMMM", 6),
    ("MMMM", 6),
    ("OOMO", 4),
    ("OMMO", 1),
    ("MOOO", 2),
    ("MOMM", 1),
]
WEEKS = ["4", "12", "24", "52"]


def main(path):
    rng = random.Random(20240)
    profiles = [p for p, count in PATTERNS for _ in range(count)]
    rng.shuffle(profiles)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["id", "occasion", "outcome", "trt", "lesion"])
        for i, profile in enumerate(profiles):
            trt = "1" if i % 2 else "0"
            lesion = str(1 + rng.randrange(4))
            b = rng.gauss(0.0, 1.5)
            for j, week in enumerate(WEEKS):
                if profile[j] == "M":
                    y = "NA"
                else:
                    eta = -1.5 + 0.3 * j + 0.4 * (trt == "1") + 0.2 * int(lesion) + b - 0.5
                    y = "1" if rng.random() < 1.0 / (1.0 + math.exp(-eta)) else "0"
                out.writerow([f"p{i + 1:03d}", week, y, trt, lesion])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/armd_patterns.csv")
