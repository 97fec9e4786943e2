"""
多结局因子混杂敏感性分析源码包
"""
