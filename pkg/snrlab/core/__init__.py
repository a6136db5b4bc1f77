"""采样、校正、诊断与实验编排"""
