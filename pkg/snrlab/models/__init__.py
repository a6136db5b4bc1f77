"""配置、调度、网格与报告数据类型"""
