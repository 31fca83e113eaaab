#!/usr/bin/env python3
"""Writes the small bundled fixture: 5 stations, 60 days, weather, config and expected totals."""

import argparse
import csv
import datetime as dt
import json
import math
import random
from collections import defaultdict
from pathlib import Path

FIRST_DAY = dt.date(2024, 8, 15)
N_DAYS = 60
SPLIT = dt.date(2024, 10, 2)
WINDOW = (dt.date(2024, 8, 20), dt.date(2024, 8, 21))
FILE_B_START = dt.date(2024, 10, 1)  # sessions from here on go to the month-first file

STATIONS = [
    # cpid, lon, lat, connector, public, tariff start, neighbourhood, log rate, first active offset
    ("50001", -4.2518, 55.8609, "AC", True, "", "City Centre", 1.3, 0),
    ("50002", -4.2890, 55.8721, "AC", True, "2024-09-10", "West End", 1.0, 0),
    ("50003", -4.2301, 55.8502, "Rapid", True, "2024-08-01", "Dennistoun", 1.7, 0),
    ("50004", -4.2702, 55.8457, "AC", False, "2024-08-01", "Gorbals", 0.4, 0),
    ("50005", -4.2205, 55.8788, "AC", True, "", "Springburn", 0.8, 10),
]
WEEKDAY = [0.05, 0.1, 0.08, 0.12, 0.2, -0.15, -0.4]  # Monday .. Sunday


def poisson(rng, lam):
    limit, k, p = math.exp(-lam), 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def fmt_date(d, month_first):
    return f"{d.month:02d}/{d.day:02d}/{d.year}" if month_first else f"{d.day:02d}/{d.month:02d}/{d.year}"


def fmt_duration(minutes):
    s = int(round(minutes * 60))
    return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"


def session_row(d, hour, minute, minutes, kwh, cost, cpid, month_first):
    start = dt.datetime(d.year, d.month, d.day, hour, minute)
    end = start + dt.timedelta(minutes=minutes)
    return {
        "CPID": cpid,
        "Start Date": fmt_date(start.date(), month_first),
        "Start Time": start.strftime("%H:%M"),
        "End Date": fmt_date(end.date(), month_first),
        "End Time": end.strftime("%H:%M"),
        "Duration": fmt_duration(minutes),
        "Total kWh": f"{kwh:.2f}",
        "Cost": f"{cost:.2f}",
        "Site": "Fixture",
        "Local Authority": "glasgow  city",
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests/fixtures/small"))
    ap.add_argument("--seed", type=int, default=20240815)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    days = [FIRST_DAY + dt.timedelta(days=i) for i in range(N_DAYS)]
    weather = {}
    for i, d in enumerate(days):
        temp = 14.0 - 6.0 * i / N_DAYS + 3.0 * math.sin(i / 4.0) + rng.gauss(0, 1.0)
        weather[d] = (round(temp, 1), round(abs(rng.gauss(4.5, 1.5)), 1), round(min(99, max(40, rng.gauss(78, 8))), 0))

    rows_a, rows_b = [], []
    kept = defaultdict(list)  # cpid -> kept session days
    window_drops = 0
    for cpid, _lon, _lat, conn, public, tariff, _nb, rate, offset in STATIONS:
        for i, d in enumerate(days):
            if i < offset:
                continue
            temp = weather[d][0]
            lam = math.exp(rate + WEEKDAY[d.weekday()] + 0.03 * (temp - 12.0))
            n = poisson(rng, lam)
            # pin the active window so zero-fill totals are predictable
            if n == 0 and (i == offset or i == N_DAYS - 1):
                n = 1
            for _ in range(n):
                hour, minute = rng.randint(7, 20), rng.randint(0, 59)
                minutes = rng.uniform(10, 180 if conn == "AC" else 45)
                kwh = rng.uniform(2, 25 if conn == "AC" else 40)
                free = tariff == "" or d < dt.date.fromisoformat(tariff)
                cost = 0.0 if free else round(kwh * 0.4, 2)
                month_first = d >= FILE_B_START
                (rows_b if month_first else rows_a).append(
                    session_row(d, hour, minute, minutes, kwh, cost, cpid, month_first))
                if WINDOW[0] <= d <= WINDOW[1]:
                    window_drops += 1
                else:
                    kept[cpid].append(d)

    # records curation must remove, one rule each
    d = dt.date(2024, 9, 16)
    bad = [
        ("zero-energy", session_row(d, 10, 0, 30, 0.0, 0.0, "50001", False)),
        ("zero-duration", session_row(d, 11, 0, 0, 5.0, 0.0, "50001", False)),
        ("over-capacity", session_row(d, 12, 0, 240, 150.0, 0.0, "50003", False)),
        ("over-tariff", session_row(d, 13, 0, 60, 20.0, 75.0, "50003", False)),
        ("excluded-cpid", session_row(d, 9, 0, 60, 10.0, 0.0, "62266", False)),
        ("excluded-cpid", session_row(d, 9, 30, 60, 10.0, 0.0, "62201", False)),
    ]
    null_row = session_row(d, 14, 0, 60, 8.0, 0.0, "50002", False)
    null_row["Total kWh"] = ""
    bad.append(("null-field", null_row))
    ts_row = session_row(d, 15, 0, 60, 8.0, 0.0, "50002", False)
    ts_row["Start Date"], ts_row["End Date"] = "31/31/2024", "31/31/2024"
    bad.append(("unparseable-timestamp", ts_row))
    unknown = [session_row(d, 16, 0, 60, 8.0, 0.0, "99999", False),
               session_row(d + dt.timedelta(days=1), 16, 0, 60, 8.0, 0.0, "99999", False)]
    rows_a.extend(r for _, r in bad)
    rows_a.extend(unknown)
    rng.shuffle(rows_a)
    rng.shuffle(rows_b)

    fields = list(rows_a[0].keys())
    for name, rows in (("sessions_a.csv", rows_a), ("sessions_b.csv", rows_b)):
        with open(out / name, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    with open(out / "stations.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["cpid", "lon", "lat", "connector_class", "is_public_access", "tariff_start_date", "neighbourhood"])
        for cpid, lon, lat, conn, public, tariff, nb, _r, _o in STATIONS:
            w.writerow([cpid, lon, lat, conn, "true" if public else "false", tariff, nb])
    with open(out / "weather.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["date", "temp_c", "wind_ms", "humidity_pct"])
        for d in days:
            t, wind, hum = weather[d]
            w.writerow([d.isoformat(), t, wind, int(hum)])

    config = {
        "data": {"sessions": ["sessions_a.csv", "sessions_b.csv"], "stations": "stations.csv",
                 "weather": "weather.csv"},
        "curation": {"capacity_cap_kwh": 100, "tariff_cap_gbp": 50,
                     "excluded_windows": [{"first": WINDOW[0].isoformat(), "last": WINDOW[1].isoformat()}],
                     "date_policy": "auto"},
        "panel": {"zero_fill": "active-window"},
        "split": {"date": SPLIT.isoformat()},
        "graph": {"knn_k": 4},
        "mesh": {"inner_edge_m": 600, "outer_edge_m": 3000, "cutoff_m": 100},
        "inference": {"criteria_samples": 200},
        "bootstrap": {"samples": 500},
        "seed": 7,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n")

    # totals of the curated, zero-filled panel
    in_window = lambda x: WINDOW[0] <= x <= WINDOW[1]
    records, panel_days, sessions = 0, set(), 0
    for cpid, days_kept in kept.items():
        lo, hi = min(days_kept), max(days_kept)
        for i in range((hi - lo).days + 1):
            x = lo + dt.timedelta(days=i)
            if not in_window(x):
                records += 1
                panel_days.add(x)
        sessions += len(days_kept)
    dropped = defaultdict(int)
    for rule, _ in bad:
        dropped[rule] += 1
    dropped["excluded-window"] += window_drops
    expected = {
        "input_total": len(rows_a) + len(rows_b),
        "dropped": dict(sorted(dropped.items())),
        "curated_sessions": sessions + len(unknown),
        "dropped_unknown_cpid": len(unknown),
        "cpids": len(kept),
        "days": len(panel_days),
        "sessions": sessions,
        "session_day_records": records,
        "file_date_policy": {"sessions_a.csv": "day-first", "sessions_b.csv": "month-first"},
        "split_date": SPLIT.isoformat(),
    }
    (out / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()
