# Coverage-constrained view motion planner
