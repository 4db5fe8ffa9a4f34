"""Regenerates the sample data in this directory. Output is deterministic."""
import csv
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).parent
MINUTE = 60_000
BAR_START = 1_704_205_800_000  # 2024-01-02 14:30 UTC
EVENT_START = 1_709_303_400_000  # 2024-03-01 14:30 UTC


def bars(n=1200, seed=7):
    rng = random.Random(seed)
    price = 100.0
    rows = []
    for i in range(n):
        drift = 0.00025 * math.sin(i / 90.0)
        o = price
        c = o * math.exp(drift + rng.gauss(0, 0.0015))
        hi = max(o, c) * (1 + abs(rng.gauss(0, 0.0007)))
        lo = min(o, c) * (1 - abs(rng.gauss(0, 0.0007)))
        vol = int(800 + rng.random() * 4000)
        rows.append((BAR_START + i * MINUTE, round(o, 2), round(hi, 2), round(lo, 2), round(c, 2), vol))
        price = round(c, 2)
    with open(HERE / "bars_1m.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["timestamp_ms", "open", "high", "low", "close", "volume"])
        for r in rows:
            o, h, l, c = r[1:5]
            w.writerow([r[0], f"{o:.2f}", f"{max(o, h, c):.2f}", f"{min(o, l, c):.2f}", f"{c:.2f}", r[5]])


def cross(live, side, px, q):
    """Matches an incoming add against resting orders, best price then oldest."""
    if side == "buy":
        makers = sorted((o for o in live if live[o][0] == "sell" and live[o][1] <= px), key=lambda o: (live[o][1], o))
    else:
        makers = sorted((o for o in live if live[o][0] == "buy" and live[o][1] >= px), key=lambda o: (-live[o][1], o))
    for oid in makers:
        if q == 0:
            break
        take = min(q, live[oid][2])
        live[oid][2] -= take
        q -= take
        if live[oid][2] == 0:
            del live[oid]
    return q


def events(n=3000, seed=11):
    rng = random.Random(seed)
    live = {}
    next_id = 1
    rows = []
    t = EVENT_START - 5_000
    mid = 5000  # cents
    # Seed a two-sided book before the session opens.
    for k in range(1, 11):
        for side, px in (("buy", mid - k), ("sell", mid + k)):
            q = rng.randint(1, 6) * 100
            rows.append((t, "add", next_id, side, px, q))
            live[next_id] = [side, px, q]
            next_id += 1
            t += 10
    t = EVENT_START
    for _ in range(n):
        t += rng.randint(50, 400)
        mid += rng.choice((-1, 0, 0, 1))
        r = rng.random()
        if r < 0.55 or not live:
            side = rng.choice(("buy", "sell"))
            if rng.random() < 0.12:
                px = mid + 3 if side == "buy" else mid - 3  # marketable
            else:
                off = rng.randint(1, 8)
                px = mid - off if side == "buy" else mid + off
            q = rng.randint(1, 5) * 100
            rows.append((t, "add", next_id, side, px, q))
            q = cross(live, side, px, q)
            if q > 0:
                live[next_id] = [side, px, q]
            next_id += 1
        elif r < 0.85:
            oid = rng.choice(sorted(live))
            side, px, q = live.pop(oid)
            rows.append((t, "cancel", oid, side, px, q))
        else:
            oid = rng.choice(sorted(live))
            side, px, q = live[oid]
            fill = min(q, rng.randint(1, 3) * 100)
            rows.append((t, "execute", oid, side, px, fill))
            live[oid][2] -= fill
            if live[oid][2] == 0:
                del live[oid]
    with open(HERE / "events_native.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_ms", "kind", "order_id", "side", "price", "qty"])
        for tm, kind, oid, side, px, q in rows:
            w.writerow([tm, kind, oid, side, f"{px / 100:.2f}", q])


def lobster():
    rows = [
        (34200.001, 1, 101, 200, 5850000, 1),
        (34200.002, 1, 102, 300, 5852000, -1),
        (34200.010, 1, 103, 100, 5849000, 1),
        (34200.050, 1, 104, 100, 5853000, -1),
        (34200.120, 4, 102, 100, 5852000, -1),
        (34200.300, 2, 101, 50, 5850000, 1),
        (34200.450, 5, 0, 100, 5851000, 1),
        (34200.600, 3, 103, 100, 5849000, 1),
        (34200.800, 1, 105, 400, 5851000, 1),
        (34201.000, 4, 104, 100, 5853000, -1),
        (34201.200, 7, -1, 1, -1, 0),
        (34201.500, 1, 106, 200, 5854000, -1),
    ]
    with open(HERE / "lobster_sample.csv", "w") as f:
        for r in rows:
            f.write(f"{r[0]:.9f},{r[1]},{r[2]},{r[3]},{r[4]},{r[5]}\n")


def external():
    news = [
        (BAR_START + 45 * MINUTE, "Supplier flags component shortage", "Lead times extend into next quarter."),
        (BAR_START + 180 * MINUTE, "Analyst raises price target", "Cites margin expansion."),
        (BAR_START + 400 * MINUTE, "Company schedules investor day", ""),
        (BAR_START + 720 * MINUTE, "Sector ETF sees record inflows", "Broad demand for large caps."),
        (BAR_START + 1100 * MINUTE, "Regulator opens inquiry", "Scope not disclosed."),
    ]
    with open(HERE / "news.jsonl", "w") as f:
        for t, headline, summary in news:
            f.write(json.dumps({"published_at": t, "symbols": ["SIMX"], "headline": headline,
                                "summary": summary, "source": "wire"}) + "\n")
    fund = [
        {"as_of": BAR_START - 86_400_000, "symbol": "SIMX", "ratios": {"pe": 24.1, "roe": 0.31},
         "events": [{"kind": "earnings", "value": 1.42}]},
        {"as_of": BAR_START + 600 * MINUTE, "symbol": "SIMX", "ratios": {"pe": 24.8, "roe": 0.31},
         "events": [{"kind": "dividend", "effective": BAR_START + 900 * MINUTE, "value": 0.24}],
         "analyst_rating": "buy"},
    ]
    with open(HERE / "fundamentals.jsonl", "w") as f:
        for row in fund:
            f.write(json.dumps(row) + "\n")


if __name__ == "__main__":
    bars()
    events()
    lobster()
    external()
