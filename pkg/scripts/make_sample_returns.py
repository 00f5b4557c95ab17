"""Regenerate src/cmlfactors/data/sample_returns.csv.

The file is a synthetic stand-in for one year of daily single-stock returns
(251 weekdays). Draws are Student-t with 3 degrees of freedom, rescaled to a
daily standard deviation of 0.033 and a drift of 0.0005, which is the scale of
a volatile large-cap equity. No market data is included.
"""
import csv
import datetime as dt
from pathlib import Path

import numpy as np

SEED = 20220725
T = 251
NU = 3.0
STD = 0.033
DRIFT = 0.0005


def weekdays(start: dt.date, n: int):
    d = start
    while n:
        if d.weekday() < 5:
            yield d
            n -= 1
        d += dt.timedelta(days=1)


def main():
    rng = np.random.default_rng(SEED)
    z = rng.standard_t(NU, size=T) / np.sqrt(NU / (NU - 2.0))
    r = DRIFT + STD * z
    out = Path(__file__).resolve().parents[1] / "src" / "cmlfactors" / "data" / "sample_returns.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "return"])
        for d, x in zip(weekdays(dt.date(2022, 7, 26), T), r):
            w.writerow([d.isoformat(), repr(round(float(x), 6))])
    print(f"wrote {out}: mean={r.mean():.5f} std={r.std(ddof=1):.5f}")


if __name__ == "__main__":
    main()
