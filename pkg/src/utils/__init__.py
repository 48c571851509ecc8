"""
Utility modules for the view motion planner.
"""
