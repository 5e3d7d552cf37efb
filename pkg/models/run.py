from sqlalchemy import Column, Integer, String, Text, DateTime, BigInteger
from datetime import datetime
from models.database import Base
import json

class AuditRun(Base):
    __tablename__ = 'audit_runs'

    id = Column(Integer, primary_key=True)
    command = Column(String(40), nullable=False)
    seed = Column(BigInteger)
    config_json = Column(Text)
    summary_json = Column(Text)
    created_at = Column(DateTime, default=datetime.utcnow)

    @property
    def config(self):
        if self.config_json:
            return json.loads(self.config_json)
        return {}

    @config.setter
    def config(self, value):
        self.config_json = json.dumps(value, sort_keys=True)

    @property
    def summary(self):
        if self.summary_json:
            return json.loads(self.summary_json)
        return {}

    @summary.setter
    def summary(self, value):
        self.summary_json = json.dumps(value, sort_keys=True)
