"""Writes the small synthetic corpus used by the tests and the smoke run.

Four shapes in the same CSV layout as the LASA export, grouped into three
concepts (two perceptually different shapes share the concept "Wave").

usage: make_toy_corpus.py <out dir>
"""
import math
import pathlib
import random
import sys

DEMOS = 5
POINTS = 200


def arc(s, r):
    a = math.pi * s
    return -40 * math.cos(a), 40 * math.sin(a) * r


def sine(s, r):
    return -45 + 90 * s, 20 * r * math.sin(2 * math.pi * s)


def zigzag(s, r):
    tri = 2 * abs(2 * ((2 * s) % 1.0) - 1) - 1
    return -45 + 90 * s, 18 * r * tri


def hook(s, r):
    if s < 0.6:
        return 0.0, 45 - 100 * s
    a = math.pi * (s - 0.6) / 0.4
    return -15 * r * (1 - math.cos(a)), -15 - 15 * r * math.sin(a)


SHAPES = {"Arc": (arc, "Arc"), "SineWave": (sine, "Wave"), "Zigzag": (zigzag, "Wave"), "Hook": (hook, "Hook")}


def main():
    out = pathlib.Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(7)
    for name, (fn, _) in SHAPES.items():
        with open(out / f"{name}.csv", "w") as f:
            f.write("demo,t,y,z\n")
            for d in range(DEMOS):
                r = 1.0 + 0.08 * (d - DEMOS // 2)
                dy, dz = rng.uniform(-2, 2), rng.uniform(-2, 2)
                for i in range(POINTS):
                    s = i / (POINTS - 1)
                    y, z = fn(s, r)
                    y += dy + rng.gauss(0, 0.2)
                    z += dz + rng.gauss(0, 0.2)
                    f.write(f"{d},{s * 2.0:.6f},{y:.6f},{z:.6f}\n")
    with open(out / "concepts.csv", "w") as f:
        f.write("shape,concept\n")
        for name, (_, concept) in SHAPES.items():
            f.write(f"{name},{concept}\n")


if __name__ == "__main__":
    main()
