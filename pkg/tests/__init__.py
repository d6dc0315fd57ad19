"""
Test suite for the shaping workbench
"""

