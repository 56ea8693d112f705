"""WLAN CSI posture-recognition benchmark toolkit.

Submodules are imported explicitly (``from csibench import data``); this
package init stays import-light so the CLI can pin BLAS thread counts
before numpy loads.
"""

__version__ = "0.1.0"
