from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, scoped_session, sessionmaker

Base = declarative_base()

_engines = {}

def get_engine(url):
    if url not in _engines:
        _engines[url] = create_engine(url, echo=False)
    return _engines[url]

def init_db(url):
    import models.run
    engine = get_engine(url)
    Base.metadata.create_all(bind=engine)
    return engine

def session_factory(url):
    return scoped_session(sessionmaker(autocommit=False, autoflush=False, bind=init_db(url)))
