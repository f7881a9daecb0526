"""Simulator and protocol library for QKD over lossy fiber and trusted-relay networks."""
