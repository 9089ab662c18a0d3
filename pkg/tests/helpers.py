import datetime as dt

import numpy as np

from seirda.dataio import ObservationSeries


def make_series(n=30, start=dt.date(2020, 3, 6), growth=1.05, new_cases=True, region="toy"):
    days = np.arange(n)
    H = np.round(30 * growth ** days)
    R = np.round(10 + 3 * days * growth ** days)
    D = np.round(1 + 0.1 * days)
    nc = np.round(10 * growth ** days) if new_cases else None
    dates = tuple(start + dt.timedelta(days=int(i)) for i in days)
    return ObservationSeries(region, dates, H, R, D, nc)
