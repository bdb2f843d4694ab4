"""Dengue nowcasting from case-count lags and search volumes via differentially penalized L1 regression."""

__version__ = "0.1.0"
