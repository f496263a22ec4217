"""SimpopLocal settlement-system simulator and its SMS-EMOA island-model calibration."""

__version__ = "0.1.0"
