"""Visualization: slice renders and convergence plots."""

from .renderer import SLICE_AXES, extract_slice, plot_convergence, render_slice, window_to_uint8

__all__ = ['SLICE_AXES', 'extract_slice', 'plot_convergence', 'render_slice', 'window_to_uint8']
