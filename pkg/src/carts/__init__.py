"""Trace-driven 5G uplink emulator: adaptive SRS triggering, asynchronous
sub-band CSI stitching, and communication/sensing evaluation on a synthetic
multipath channel."""

from carts.core import (
    EstimateBuffer,
    FrequencyGrid,
    Origin,
    SlotClock,
    SubBandEstimate,
    coverage_complete,
    select_reference,
)

__all__ = [
    "EstimateBuffer",
    "FrequencyGrid",
    "Origin",
    "SlotClock",
    "SubBandEstimate",
    "coverage_complete",
    "select_reference",
]
