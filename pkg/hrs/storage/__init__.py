from hrs.storage.checkpoint_store import (
    CheckpointStore,
    read_checkpoint,
    write_checkpoint,
)
from hrs.storage.record_store import RecordStore, file_digest, read_manifest
