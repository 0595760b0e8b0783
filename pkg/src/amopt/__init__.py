"""American option pricing with binomial trees and recurrent networks."""

__version__ = "0.1.0"
