"""Corpus plumbing: manifests, lexicons, stats, pair alphabets, splits,
and the bundled synthetic voices."""
import numpy as np
import pytest

from multivoice.data import (
    BLANK,
    SILENCE,
    Lexicon,
    ManifestEntry,
    N_FOLDS,
    assign_fold,
    build_lexicon,
    build_pair_alphabet,
    compute_speaker_stats,
    default_speakers,
    generate_corpus,
    load_stats,
    pairs_in_sequence,
    parse_lexicon,
    parse_manifest,
    read_alignment,
    render_utterance,
    resolve_audio_path,
    save_stats,
    split_corpus,
    text_to_phonemes,
    tokenize,
    write_lexicon,
    write_manifest,
)
from multivoice.dsp import F0Track, estimate_f0, read_wav


class TestManifest:
    def test_roundtrip(self, tmp_path):
        entries = [
            ManifestEntry("wav/a.wav", "spk0", "ka see"),
            ManifestEntry("wav/b.wav", "spk1", "soo"),
        ]
        path = tmp_path / "manifest.tsv"
        write_manifest(path, entries)
        assert parse_manifest(path, check_audio=False) == entries

    def test_error_names_line(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("wav/a.wav\tspk0\tka\nwav/b.wav\tspk1\n")
        with pytest.raises(ValueError, match="manifest.tsv:2"):
            parse_manifest(path, check_audio=False)

    def test_duplicate_audio_rejected(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("wav/a.wav\tspk0\tka\nwav/a.wav\tspk1\tsoo\n")
        with pytest.raises(ValueError, match="duplicate"):
            parse_manifest(path, check_audio=False)

    def test_missing_audio_flagged(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("wav/nope.wav\tspk0\tka\n")
        with pytest.raises(ValueError, match="not found"):
            parse_manifest(path, check_audio=True)

    def test_field_with_tab_rejected_on_write(self, tmp_path):
        entries = [ManifestEntry("wav/a.wav", "spk\t0", "ka")]
        with pytest.raises(ValueError, match="separator"):
            write_manifest(tmp_path / "m.tsv", entries)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        path.write_text("\nwav/a.wav\tspk0\tka\n\n")
        assert len(parse_manifest(path, check_audio=False)) == 1

    def test_resolve_relative_to_manifest(self, tmp_path):
        entry = ManifestEntry("wav/a.wav", "spk0", "ka")
        resolved = resolve_audio_path(tmp_path / "m.tsv", entry)
        assert resolved == str(tmp_path / "wav" / "a.wav")


class TestLexicon:
    def test_tokenize_lowercases_and_splits(self):
        assert tokenize("Ka, SEE soo!") == ["ka", "see", "soo"]
        assert tokenize("don't stop") == ["don't", "stop"]

    def test_boundary_silence_default(self):
        lex = build_lexicon()
        phones = text_to_phonemes("ka see", lex)
        assert phones[0] == SILENCE and phones[-1] == SILENCE
        assert phones[1:-1] == ["kk", "aa", "ss", "ee"]

    def test_interword_silence(self):
        lex = build_lexicon()
        phones = text_to_phonemes("ka see", lex, interword_silence=True)
        assert phones == [SILENCE, "kk", "aa", SILENCE, "ss", "ee", SILENCE]

    def test_oov_lists_missing_words(self):
        lex = build_lexicon()
        with pytest.raises(ValueError, match="blorp, zeff"):
            text_to_phonemes("ka blorp zeff blorp", lex)

    def test_empty_transcript_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            text_to_phonemes("  ,. ", build_lexicon())

    def test_file_roundtrip(self, tmp_path):
        lex = build_lexicon()
        path = tmp_path / "lexicon.txt"
        write_lexicon(path, lex)
        back = parse_lexicon(path)
        assert back.entries == lex.entries

    def test_duplicate_word_rejected(self, tmp_path):
        path = tmp_path / "lexicon.txt"
        path.write_text("ka kk aa\nka kk aa\n")
        with pytest.raises(ValueError, match="duplicate"):
            parse_lexicon(path)

    def test_silence_first_in_phoneme_set(self):
        lex = build_lexicon()
        assert lex.phoneme_set[0] == SILENCE


class TestSpeakerStats:
    def test_two_value_example(self):
        # voiced f0 values {100, 300}: mean 200, population std 100
        track = F0Track(np.array([100.0, 300.0]), np.array([True, True]))
        stats = compute_speaker_stats({"s": [track]})
        assert stats["s"].f0_mean == pytest.approx(200.0)
        assert stats["s"].f0_std == pytest.approx(100.0)

    def test_unvoiced_frames_ignored(self):
        track = F0Track(np.array([100.0, 0.0, 300.0]),
                        np.array([True, False, True]))
        stats = compute_speaker_stats({"s": [track]})
        assert stats["s"].f0_mean == pytest.approx(200.0)

    def test_no_voiced_frames_rejected(self):
        track = F0Track(np.zeros(4), np.zeros(4, dtype=bool))
        with pytest.raises(ValueError, match="voiced"):
            compute_speaker_stats({"s": [track]})

    def test_std_floor(self):
        track = F0Track(np.full(8, 150.0), np.ones(8, dtype=bool))
        stats = compute_speaker_stats({"s": [track]})
        assert stats["s"].f0_std >= 1e-6

    def test_save_load_roundtrip(self, tmp_path):
        t = F0Track(np.array([100.0, 300.0]), np.array([True, True]))
        stats = compute_speaker_stats({"b": [t], "a": [t, t]})
        path = tmp_path / "stats.jsonl"
        save_stats(path, stats)
        back = load_stats(path)
        assert back.keys() == stats.keys()
        assert back["a"].utterance_count == 2
        assert back["b"].f0_mean == pytest.approx(200.0)


class TestPairAlphabet:
    def test_pairs_in_sequence(self):
        assert pairs_in_sequence(["sil", "kk", "aa"]) == [
            ("sil", "kk"), ("kk", "aa")]

    def test_blank_reserved_at_zero(self):
        alpha = build_pair_alphabet([["sil", "kk", "aa", "sil"]])
        assert alpha.blank_index == 0
        assert alpha.label_of(0) == BLANK
        assert alpha.size == len(alpha.pairs) + 1

    def test_encode_decode_consistent(self):
        alpha = build_pair_alphabet([["sil", "kk", "aa", "sil"],
                                     ["sil", "ss", "ee", "sil"]])
        seq = ["sil", "ss", "ee", "sil"]
        codes = alpha.encode_sequence(seq)
        assert all(c >= 1 for c in codes)
        assert [alpha.label_of(c) for c in codes] == pairs_in_sequence(seq)

    def test_unknown_pair_raises(self):
        alpha = build_pair_alphabet([["sil", "kk"]])
        with pytest.raises(KeyError):
            alpha.index_of(("kk", "sil"))

    def test_all_sequences_too_short(self):
        with pytest.raises(ValueError):
            build_pair_alphabet([["sil"], ["aa"]])


class TestSplit:
    def test_assign_fold_deterministic_and_bounded(self):
        folds = [assign_fold("spk0", i) for i in range(200)]
        assert folds == [assign_fold("spk0", i) for i in range(200)]
        assert all(0 <= f < N_FOLDS for f in folds)
        assert len(set(folds)) > 1

    def test_split_disjoint_and_total(self):
        entries = [ManifestEntry(f"wav/{s}_{i}.wav", s, "ka")
                   for s in ("spk0", "spk1") for i in range(40)]
        train, val = split_corpus(entries)
        assert set(train) | set(val) == set(range(len(entries)))
        assert set(train) & set(val) == set()
        assert 0 < len(val) < len(entries) // 4

    def test_split_independent_of_interleaving(self):
        a = [ManifestEntry(f"wav/a_{i}.wav", "a", "ka") for i in range(10)]
        b = [ManifestEntry(f"wav/b_{i}.wav", "b", "ka") for i in range(10)]
        t1, v1 = split_corpus(a + b)
        interleaved = [x for pair in zip(a, b) for x in pair]
        t2, v2 = split_corpus(interleaved)
        val_paths_1 = {(a + b)[i].audio_path for i in v1}
        val_paths_2 = {interleaved[i].audio_path for i in v2}
        assert val_paths_1 == val_paths_2


class TestSyntheticCorpus:
    def test_two_speaker_f0_means(self, tmp_path):
        # voices built around 120 Hz and 220 Hz fundamentals; the
        # autocorrelation tracker must recover both within 5 Hz
        paths = generate_corpus(tmp_path, n_speakers=2,
                                utterances_per_speaker=4, seed=11)
        tracks = {}
        for e in parse_manifest(paths.manifest):
            clip = read_wav(tmp_path / e.audio_path)
            tracks.setdefault(e.speaker_id, []).append(estimate_f0(clip))
        stats = compute_speaker_stats(tracks)
        assert stats["spk0"].f0_mean == pytest.approx(120.0, abs=5.0)
        assert stats["spk1"].f0_mean == pytest.approx(220.0, abs=5.0)

    def test_alignment_covers_clip(self, tmp_path):
        paths = generate_corpus(tmp_path, n_speakers=2,
                                utterances_per_speaker=2, seed=3)
        entries = parse_manifest(paths.manifest)
        for e in entries:
            stem = e.audio_path.split("/")[-1].replace(".wav", "")
            align = read_alignment(paths.alignments_dir / f"{stem}.align")
            clip = read_wav(tmp_path / e.audio_path)
            assert align[0][1] == 0.0
            for (_, _, end_prev), (_, start, _) in zip(align, align[1:]):
                assert start == pytest.approx(end_prev)
            assert align[-1][2] == pytest.approx(
                len(clip.samples) * 1000.0 / clip.sample_rate)
            assert align[0][0] == SILENCE and align[-1][0] == SILENCE

    def test_deterministic_for_seed(self, tmp_path):
        p1 = generate_corpus(tmp_path / "a", n_speakers=2,
                             utterances_per_speaker=2, seed=5)
        p2 = generate_corpus(tmp_path / "b", n_speakers=2,
                             utterances_per_speaker=2, seed=5)
        for e1, e2 in zip(parse_manifest(p1.manifest),
                          parse_manifest(p2.manifest)):
            assert e1.transcript == e2.transcript
            c1 = read_wav(tmp_path / "a" / e1.audio_path)
            c2 = read_wav(tmp_path / "b" / e2.audio_path)
            np.testing.assert_array_equal(c1.samples, c2.samples)

    def test_deterministic_durations_fixed_per_phoneme(self):
        spk = default_speakers(2)[0]
        rng = np.random.default_rng(0)
        phones = ["sil", "kk", "aa", "kk", "aa", "sil"]
        _, align = render_utterance(phones, spk, rng)
        durs = {}
        for p, s, e in align:
            durs.setdefault(p, set()).add(round(e - s, 6))
        for p, seen in durs.items():
            assert len(seen) == 1, f"{p} got multiple durations {seen}"

    def test_consonants_unvoiced_vowels_voiced(self):
        spk = default_speakers(2)[1]
        rng = np.random.default_rng(1)
        clip, align = render_utterance(
            ["sil", "ss", "aa", "ss", "sil"], spk, rng)
        track = estimate_f0(clip)
        hop = int(round(track.hop_seconds * clip.sample_rate))
        for phoneme, start_ms, end_ms in align:
            lo = int(start_ms / 1000 * clip.sample_rate / hop) + 2
            hi = int(end_ms / 1000 * clip.sample_rate / hop) - 2
            if hi <= lo:
                continue
            frac = float(np.mean(track.voiced[lo:hi]))
            if phoneme == "aa":
                assert frac > 0.8
            elif phoneme in ("ss", "sil"):
                assert frac < 0.3

    def test_speakers_distinct(self):
        for n in (2, 4, 10):
            speakers = default_speakers(n)
            f0s = [s.f0_hz for s in speakers]
            assert len(set(f0s)) == n
            assert len({s.speaker_id for s in speakers}) == n
        classes = {s.pitch_class for s in default_speakers(10)}
        assert classes == {"low", "high"}
