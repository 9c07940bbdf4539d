"""Synthetic fixture corpora for offline runs, tests and the demo.

:func:`write_fixtures` fabricates a consistent set of recordings (hydration,
geocoding, demographics) for ``n`` tweet ids, so a whole pipeline can run in
fixtures mode without any network access.
"""

from __future__ import annotations

import json
import os
import random
from dataclasses import dataclass
from pathlib import Path

from .connectors.classify import KIND as CLASSIFIER_KIND
from .connectors.classify import PRESETS
from .connectors.fixtures import FixtureStore
from .connectors.geocode import KIND as GEO_KIND
from .connectors.geocode import normalize_location
from .connectors.hydrate import FIXTURE_KIND as HYDRATE_KIND
from .frame import Frame

PLACES = {
    "Milan, Italy": ("Italy", "Milan"),
    "New York City": ("United States", "New York City"),
    "NYC": ("United States", "New York City"),
    "Berlin": ("Germany", "Berlin"),
    "Lyon, France": ("France", "Lyon"),
    "Turin": ("Italy", "Turin"),
    "London, UK": ("United Kingdom", "London"),
    "Madrid": ("Spain", "Madrid"),
}
UNRESOLVABLE = ("somewhere over the rainbow", "my couch")

POSITIVE_WORDS = ("good", "great", "love", "happy", "excellent")
NEGATIVE_WORDS = ("bad", "awful", "hate", "sad", "terrible")
FILLER = ("the", "weather", "today", "match", "city", "news", "coffee", "train", "music", "#covid")


@dataclass
class FixtureCorpus:
    root: Path
    frame: Frame
    missing_ids: list[str]


def _geonames_body(country: str, name: str, seq: int) -> dict:
    return {
        "totalResultsCount": 1,
        "geonames": [
            {
                "geonameId": 3000000 + seq,
                "name": name,
                "toponymName": name,
                "countryName": country,
                "countryCode": country[:2].upper(),
                "fcl": "P",
                "fcode": "PPLA",
                "lat": "0.0",
                "lng": "0.0",
            }
        ],
    }


def _text(rng: random.Random) -> str:
    words = rng.sample(FILLER, 4)
    mood = rng.random()
    if mood < 0.4:
        words.append(rng.choice(POSITIVE_WORDS))
    elif mood < 0.7:
        words.append(rng.choice(NEGATIVE_WORDS))
    rng.shuffle(words)
    text = " ".join(words).capitalize() + rng.choice(("!", ".", "?", ""))
    if rng.random() < 0.2:
        text += f" https://t.co/{rng.randrange(16**8):08x}"
    return text


def write_fixtures(
    root: str | os.PathLike,
    n: int,
    seed: int = 0,
    missing_every: int = 10,
    classifier_name: str = "demographics",
) -> FixtureCorpus:
    """Record fixtures for ``n`` ids under ``root`` and return the id frame.

    Every ``missing_every``-th id is recorded as not found. A quarter of the
    users have no profile location and a few have an unresolvable one.
    """
    rng = random.Random(seed)
    store = FixtureStore(root)
    ids = [str(1_200_000_000_000_000_000 + 7919 * i + rng.randrange(7919)) for i in range(n)]
    missing = []
    places = list(PLACES)
    allowed = PRESETS["demographics"]["allowed"]
    geo_seen: set[str] = set()
    for i, tid in enumerate(ids):
        if missing_every and i % missing_every == missing_every - 1:
            store.save(HYDRATE_KIND, {"tweet_id": tid}, {"errors": [{"value": tid, "title": "Not Found Error"}]})
            missing.append(tid)
            continue
        user_id = str(10_000 + i)
        roll = rng.random()
        if roll < 0.25:
            location = None
        elif roll < 0.3:
            location = rng.choice(UNRESOLVABLE)
        else:
            location = rng.choice(places)
            if rng.random() < 0.3:
                location = "  " + location.upper() + " "
        text = _text(rng)
        user = {"id": user_id, "username": f"user_{i:05d}", "name": f"User {i}"}
        user["profile_image_url"] = f"https://pbs.twimg.com/profile_images/{user_id}/a.jpg"
        if location is not None:
            user["location"] = location
        tweet = {
            "id": tid,
            "text": text,
            "author_id": user_id,
            "created_at": f"2020-03-{1 + i % 28:02d}T12:{i % 60:02d}:00.000Z",
            "lang": "en",
        }
        store.save(HYDRATE_KIND, {"tweet_id": tid}, {"data": [tweet], "includes": {"users": [user]}})
        if location is not None:
            key = normalize_location(location)
            if key not in geo_seen:
                geo_seen.add(key)
                canonical = next((p for p in places if normalize_location(p) == key), None)
                if canonical is None:
                    body = {"totalResultsCount": 0, "geonames": []}
                else:
                    body = _geonames_body(*PLACES[canonical], seq=places.index(canonical))
                store.save(GEO_KIND, {"q": key}, body)
        labels = [rng.choice(allowed[col]) for col in PRESETS["demographics"]["columns"]]
        store.save(CLASSIFIER_KIND, {"model": classifier_name, "text": text}, {"labels": labels})
    frame = Frame.from_dict({"tweet_id": ids})
    return FixtureCorpus(Path(root), frame, missing)


def write_json(path: str | os.PathLike, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
