from dataclasses import dataclass


@dataclass(frozen=True)
class NeighborSet:
    """The k public images closest to one caption embedding.

    Similarities are nonincreasing; equal similarities are ordered by
    ascending public ID.
    """

    query_id: str
    neighbor_ids: tuple
    similarities: tuple

    @property
    def k(self):
        return len(self.neighbor_ids)

    def to_dict(self):
        return {
            'query_id': self.query_id,
            'neighbor_ids': list(self.neighbor_ids),
            'similarities': [float(s) for s in self.similarities],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(str(data['query_id']), tuple(data['neighbor_ids']),
                   tuple(float(s) for s in data['similarities']))
