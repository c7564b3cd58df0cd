"""Writes tests/fixtures/tiny_onnx: two randomly initialised DistilBERT
classifiers (9 and 3 logits) exported to ONNX, their WordPiece vocabulary
and tokenizer spec, and reference token ids and logits from the Hugging Face
tokenizer and PyTorch.

    python3 scripts/export_tiny_onnx.py
"""

import json
import pathlib

import torch
from transformers import BertTokenizer, DistilBertConfig, DistilBertForSequenceClassification

OUT = pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "tiny_onnx"
MAX_POSITION = 32

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "nurse", "doctor", "he", "she", "was", "is", "very", "kind",
    "caring", "engineer", "muslim", "christian", "man", "woman", "black",
    "white", "people", "are", "good", "at", "math", "un", "##aff", "##able",
    "##s", "##ing", "##ed", "cafe", "resume", ",", ".", "!", "?", "'", "-",
    "my", "neighbor", "from", "country", "always", "never", "lazy", "smart",
    "strong", "weak", "and", "or", "to", "of", "in", "on", "it", "they",
    "work", "##er", "play", "football",
]

SENTENCES = [
    "The nurse was very caring.",
    "He is good at math!",
    "My neighbor from the country always works.",
    "Unaffable engineers, unaffable doctors?",
    "She was a CAFÉ résumé person.",
    "The zebra was lazy",
    "",
    " ".join(["the nurse was very kind"] * 12),
]


def export(num_labels: int, name: str) -> list:
    torch.manual_seed(num_labels)
    cfg = DistilBertConfig(
        vocab_size=len(VOCAB), dim=16, n_layers=2, n_heads=2, hidden_dim=32,
        max_position_embeddings=MAX_POSITION, num_labels=num_labels, initializer_range=0.5,
    )
    model = DistilBertForSequenceClassification(cfg).eval()
    ids = torch.tensor([[2, 5, 7, 3]])
    torch.onnx.export(
        model, (ids, torch.ones_like(ids)), str(OUT / name),
        input_names=["input_ids", "attention_mask"], output_names=["logits"],
        dynamic_axes={"input_ids": {0: "b", 1: "s"}, "attention_mask": {0: "b", 1: "s"}, "logits": {0: "b"}},
        opset_version=14, dynamo=False,
    )
    tok = BertTokenizer(str(OUT / "vocab.txt"), do_lower_case=True)
    rows = []
    for s in SENTENCES:
        enc = tok(s, truncation=True, max_length=MAX_POSITION, return_tensors="pt")
        with torch.no_grad():
            logits = model(enc["input_ids"], attention_mask=enc["attention_mask"]).logits[0]
        rows.append({"text": s, "input_ids": enc["input_ids"][0].tolist(), "logits": logits.tolist()})
    return rows


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "vocab.txt").write_text("\n".join(VOCAB) + "\n")
    spec = {"vocab_file": "vocab.txt", "do_lower_case": True, "cls_id": 2, "sep_id": 3, "pad_id": 0,
            "max_position": MAX_POSITION}
    (OUT / "tokenizer_spec.json").write_text(json.dumps(spec, indent=2) + "\n")
    reference = {"full": export(9, "tiny9.onnx"), "dimension": export(3, "tiny3.onnx")}
    (OUT / "reference.json").write_text(json.dumps(reference, indent=1) + "\n")


if __name__ == "__main__":
    main()
