"""European call pricing under Markov-modulated geometric Brownian motion."""
from .bsm import call_price, call_vega
from .errors import MMGBMError
from .iv import DirectPricer, NormalizedPricer, implied_vol
from .model import Contract, Grid, MarketScenario, ModelParams, load_config, reference_model
from .pricer import PriceSurface, price_at, solve_surface, stability_check

__version__ = "0.1.0"
