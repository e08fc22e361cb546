"""
Head Pose Tracker - Entry Point

Adaptive Kalman filtering of head-pose streams:

  estimator output (pitch, yaw, roll) per frame
    → loop closure towards the calibrated origin
    → angle-dependent observation noise R
    → constant-velocity Kalman predict / update
    → posterior pose for the virtual camera

Usage:
  python main.py simulate --out data/benchmark.jsonl --errors-csv data/errors.csv
  python main.py fit --in data/errors.csv --out config/profiles/fitted.yaml
  python main.py filter --in data/benchmark.jsonl --out data/filtered.jsonl
  python main.py compare --in data/benchmark.jsonl
  python main.py serve --listen 127.0.0.1:9999
"""

import os
import sys

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "src"))

from pipeline.cli import cli_dispatch  # noqa: E402


def main():
    """Main entry point."""
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
