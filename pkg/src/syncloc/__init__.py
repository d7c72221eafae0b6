"""Joint synchronization and localization of mobile nodes.

An MN exchanges time-stamps with a serving AN while one or more ANs measure
its angle of arrival; a recursive Bayesian filter tracks the MN's clock skew,
clock offset, position and velocity from these observations.
"""

__version__ = "0.1.0"
