# Tests package for fractional-mfg
