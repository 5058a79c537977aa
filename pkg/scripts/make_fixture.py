#!/usr/bin/env python3
"""Regenerate the bundled synthetic travel-survey fixture.

Writes src/chargecast/data/survey_fixture.csv: 200 rows in the NHTS-style
trip schema (HOUSEID, VEHID, TRAVDAY, STRTTIME, ENDTIME, TRVLCMIN,
TRPMILES, WHYTO). The rows encode a known set of home-closed chains plus a
handful of deliberately malformed rows/sequences, so ingest tests can
assert exact counts:

    chains: H-W-H 44, H-SE-H 20, H-SR-H 8, H-O-H 11, H-W-SE-H 6,
            H-SE-SR-H 2   (91 total)
    parse rejects: 1 nonpositive duration, 1 end-before-start
    chain drops: 1 four-trip sequence, 1 never-home, 1 overlapping pair

Deterministic: fixed RNG seed, stable row order.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

KM_PER_MILE = 1.609344
OUT = Path(__file__).resolve().parents[1] / "src" / "chargecast" / "data" / "survey_fixture.csv"

WHYTO = {"H": 1, "W": 3, "SE": 11, "SR": 15, "O": 97}

rng = np.random.default_rng(20250810)
rows: list[dict] = []
house_counter = 0


def clip_norm(mean, sd, lo, hi):
    return float(np.clip(rng.normal(mean, sd), lo, hi))


def hhmm(minute: int) -> str:
    minute %= 1440
    return f"{minute // 60:02d}{minute % 60:02d}"


def add_trip(house, day, start, end, length_km, dest, duration=None):
    """One CSV row; end >= 1440 is written as a past-midnight clock time."""
    dur = duration if duration is not None else end - start
    rows.append({
        "HOUSEID": house,
        "VEHID": "1",
        "TRAVDAY": day,
        "STRTTIME": hhmm(start),
        "ENDTIME": hhmm(end),
        "TRVLCMIN": dur,
        "TRPMILES": round(length_km / KM_PER_MILE, 3),
        "WHYTO": WHYTO[dest],
    })


def next_house():
    global house_counter
    house_counter += 1
    return f"H{house_counter:04d}", (house_counter - 1) % 7 + 1


def duration_min(length_km, velocity_kmh):
    return max(5, int(round(60.0 * length_km / velocity_kmh)))


def make_chain(midway_specs, last_leg_len):
    """midway_specs: list of (dest, end_time | None, length_km, dwell_min).

    The first spec must give the trip-1 ending time; later trips start when
    the previous dwell ends. The final trip returns home.
    """
    house, day = next_house()
    prev_end = None
    for dest, end1, length, dwell in midway_specs:
        vel = clip_norm(38, 7, 20, 65)
        dur = duration_min(length, vel)
        if prev_end is None:
            end = int(round(end1))
            start = max(1, end - dur)
        else:
            start = prev_end
            end = start + dur
        add_trip(house, day, start, end, length, dest)
        prev_end = min(end + int(round(dwell)), 1425)  # next trip departs same clock day
    vel = clip_norm(38, 7, 20, 65)
    dur = duration_min(last_leg_len, vel)
    add_trip(house, day, prev_end, prev_end + dur, last_leg_len, "H")


# --- 44 commute chains H-W-H: morning arrivals at W, evening returns -------
for _ in range(44):
    end1 = clip_norm(470, 38, 355, 615)            # arrive at work ~07:50
    len1 = clip_norm(60, 12, 20, 95)
    dwell = clip_norm(545, 45, 420, 660)           # ~9 h at work
    len2 = len1 * clip_norm(1.0, 0.06, 0.85, 1.15)
    make_chain([("W", end1, len1, dwell)], len2)

# --- 20 errand chains H-SE-H: late-morning shopping -------------------------
for _ in range(20):
    end1 = clip_norm(645, 45, 540, 780)
    len1 = clip_norm(46, 10, 15, 78)
    dwell = clip_norm(95, 25, 30, 180)
    make_chain([("SE", end1, len1, dwell)], len1 * clip_norm(1.0, 0.08, 0.8, 1.2))

# --- 8 social chains H-SR-H: evening outings (one runs past midnight) ------
for i in range(8):
    if i == 7:
        # Crafted past-midnight return: 22:00-22:45 out, 23:40-00:20 home.
        house, day = next_house()
        add_trip(house, day, 1320, 1365, 25.0, "SR")
        add_trip(house, day, 1420, 1460, 24.0, "H")
        continue
    end1 = clip_norm(1090, 40, 990, 1180)
    len1 = clip_norm(45, 11, 15, 78)
    dwell = clip_norm(110, 30, 40, 200)
    make_chain([("SR", end1, len1, dwell)], len1 * clip_norm(1.0, 0.08, 0.8, 1.2))

# --- 11 other-purpose chains H-O-H: afternoon appointments ------------------
for i in range(11):
    end1 = clip_norm(885, 50, 780, 1000)
    len1 = clip_norm(43, 11, 14, 75)
    dwell = clip_norm(80, 20, 30, 150)
    if i == 10:
        # Unmapped purpose code (school run): defaults to class O.
        house, day = next_house()
        vel = clip_norm(38, 7, 20, 65)
        dur = duration_min(len1, vel)
        end = int(round(end1))
        add_trip(house, day, end - dur, end, len1, "O")
        rows[-1]["WHYTO"] = 8
        back = len1 * clip_norm(1.0, 0.08, 0.8, 1.2)
        dur2 = duration_min(back, clip_norm(38, 7, 20, 65))
        start2 = min(end + int(round(dwell)), 1425)
        add_trip(house, day, start2, start2 + dur2, back, "H")
        continue
    make_chain([("O", end1, len1, dwell)], len1 * clip_norm(1.0, 0.08, 0.8, 1.2))

# --- 6 work+errand chains H-W-SE-H ------------------------------------------
for _ in range(6):
    end1 = clip_norm(470, 35, 360, 600)
    len_w = clip_norm(54, 11, 18, 88)
    dwell_w = clip_norm(525, 40, 420, 630)
    len_se = clip_norm(18, 6, 5, 36)
    dwell_se = clip_norm(70, 20, 25, 130)
    make_chain(
        [("W", end1, len_w, dwell_w), ("SE", None, len_se, dwell_se)],
        clip_norm(48, 11, 15, 82),
    )

# --- 2 errand+social chains H-SE-SR-H ---------------------------------------
for _ in range(2):
    end1 = clip_norm(650, 40, 560, 760)
    make_chain(
        [("SE", end1, clip_norm(38, 10, 12, 64), clip_norm(90, 20, 40, 150)),
         ("SR", None, clip_norm(27, 8, 9, 48), clip_norm(100, 25, 40, 170))],
        clip_norm(38, 10, 12, 64),
    )

# --- malformed sequences (dropped during chain building) --------------------
# Four trips before returning home: the whole segment is discarded.
house, day = next_house()
add_trip(house, day, 480, 520, 20.0, "W")
add_trip(house, day, 700, 720, 8.0, "SE")
add_trip(house, day, 800, 825, 9.0, "O")
add_trip(house, day, 1000, 1040, 21.0, "H")

# Never returns home.
house, day = next_house()
add_trip(house, day, 500, 540, 18.0, "W")
add_trip(house, day, 1020, 1050, 12.0, "SE")

# Overlapping trips (second departs before the first arrives).
house, day = next_house()
add_trip(house, day, 480, 540, 22.0, "W")
add_trip(house, day, 530, 570, 21.0, "H")

# --- malformed rows (rejected during parsing) --------------------------------
house, day = next_house()
add_trip(house, day, 600, 630, 10.0, "SE", duration=-5)      # nonpositive duration
house, day = next_house()
add_trip(house, day, 840, 780, 10.0, "SE", duration=30)      # end < start, not a wrap

OUT.parent.mkdir(parents=True, exist_ok=True)
with open(OUT, "w", newline="") as fh:
    writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)

print(f"wrote {len(rows)} rows -> {OUT}")
