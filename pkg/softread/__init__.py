"""softread - soft decoding of qubit readout"""
__version__ = "0.1.0"
