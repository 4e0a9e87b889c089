"""TDO-MPC 테스트 패키지"""
