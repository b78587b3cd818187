"""Deterministic simulator and analysis toolkit for timelock-free virtual
channels secured by warden committees."""

__version__ = "0.1.0"
