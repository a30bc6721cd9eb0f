"""Pulsed optomechanical reconstruction of mechanical oscillator networks."""
__version__ = "0.1.0"
