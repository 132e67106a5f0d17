"""Learning-centric time and energy allocation for multi-task edge training."""
__version__ = "0.1.0"
