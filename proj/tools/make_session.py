"""Writes a synthetic operator session: one second of still pose for
calibration, then a slow forearm swing, a grasp and a short walk."""

import argparse
import json
import math


def axis_angle(axis, angle):
    s = math.sin(angle / 2.0)
    return [math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s]


def frame(t):
    a = 0.0 if t < 1.2 else 0.4 * math.sin(t - 1.2)
    ident = [1.0, 0.0, 0.0, 0.0]
    grip = min(1.0, max(0.0, (t - 4.0) / 1.0)) if t < 6.0 else 0.0
    return {
        "t": 100.0 + t,
        "nodes": {
            "chest": ident,
            "left_upper_arm": axis_angle((0, 1, 0), -a),
            "left_forearm": axis_angle((0, 1, 0), -2.0 * a),
            "right_upper_arm": ident,
            "right_forearm": ident,
        },
        "head": {"p": [0.0, 0.0, 1.6], "R": [1, 0, 0, 0, 1, 0, 0, 0, 1]},
        "gaze": {"version": 0.0, "vergence": 0.1, "tilt": 0.0},
        "eye_openness": 1.0,
        "fingers": {"left": [grip] * 5, "right": [0.0] * 5},
        "treadmill": {"speed": 0.15 if 6.0 <= t < 9.0 else 0.0, "ring_heading": 0.0},
        "expression": "smile" if t > 2.0 else "neutral",
    }


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("out")
    p.add_argument("--seconds", type=float, default=10.0)
    p.add_argument("--rate", type=float, default=100.0)
    args = p.parse_args()
    n = int(args.seconds * args.rate)
    with open(args.out, "w") as f:
        for i in range(n):
            f.write(json.dumps(frame(i / args.rate)) + "\n")


if __name__ == "__main__":
    main()
