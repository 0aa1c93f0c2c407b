"""Energy-storage arbitrage in a transmission-constrained market.

Subpackages: model (domain types), rts24 (bundled instance), lp/milp
(optimization layer), market (price-taker clearing and LMPs), mpec
(strategic bidding), simulation (multi-day campaigns and sweeps),
reporting (duration curves, histograms, SVG), cli (command line).
"""
__version__ = "0.1.0"
