"""多结局因子混杂敏感性分析的统计核心"""
