"""Core grid types, volume arithmetic, metrics and volume I/O."""

from .volume import (
    GridSpec,
    Volume,
    VolumeStats,
    check_same_grid,
    inner_product,
    norm,
    nrmse,
    volume_axpy,
)
from .volume_io import float32_payload, read_volume, write_volume

__all__ = [
    'GridSpec', 'Volume', 'VolumeStats', 'check_same_grid', 'inner_product', 'norm',
    'nrmse', 'volume_axpy', 'float32_payload', 'read_volume', 'write_volume',
]
