"""
Porter suffix-stripping stemmer

Follows the ANSI C reference release of the algorithm, including its two
well-known departures from the 1980 description ('bli' -> 'ble' instead of
'abli' -> 'able', and the extra 'logi' -> 'log' rule), so that output agrees
with the published reference vocabulary.
"""

from functools import lru_cache


class PorterStemmer:
    """Stem one lowercase alphabetic word at a time"""

    def __init__(self):
        self.b = []
        self.k = 0
        self.j = 0

    def _cons(self, i: int) -> bool:
        ch = self.b[i]
        if ch in 'aeiou':
            return False
        if ch == 'y':
            return i == 0 or not self._cons(i - 1)
        return True

    def _m(self) -> int:
        """Number of consonant-vowel sequences in b[0..j]"""
        n = 0
        i = 0
        j = self.j
        while True:
            if i > j:
                return n
            if not self._cons(i):
                break
            i += 1
        i += 1
        while True:
            while True:
                if i > j:
                    return n
                if self._cons(i):
                    break
                i += 1
            i += 1
            n += 1
            while True:
                if i > j:
                    return n
                if not self._cons(i):
                    break
                i += 1
            i += 1

    def _vowel_in_stem(self) -> bool:
        return any(not self._cons(i) for i in range(self.j + 1))

    def _double_cons(self, j: int) -> bool:
        if j < 1:
            return False
        if self.b[j] != self.b[j - 1]:
            return False
        return self._cons(j)

    def _cvc(self, i: int) -> bool:
        if i < 2 or not self._cons(i) or self._cons(i - 1) or not self._cons(i - 2):
            return False
        return self.b[i] not in 'wxy'

    def _ends(self, s: str) -> bool:
        length = len(s)
        if s[-1] != self.b[self.k]:
            return False
        if length > self.k + 1:
            return False
        if ''.join(self.b[self.k - length + 1:self.k + 1]) != s:
            return False
        self.j = self.k - length
        return True

    def _set_to(self, s: str) -> None:
        self.b[self.j + 1:self.k + 1] = list(s)
        self.k = self.j + len(s)

    def _replace(self, s: str) -> None:
        if self._m() > 0:
            self._set_to(s)

    def _step1ab(self) -> None:
        """Plurals and -ed / -ing"""
        if self.b[self.k] == 's':
            if self._ends('sses'):
                self.k -= 2
            elif self._ends('ies'):
                self._set_to('i')
            elif self.b[self.k - 1] != 's':
                self.k -= 1
        if self._ends('eed'):
            if self._m() > 0:
                self.k -= 1
        elif (self._ends('ed') or self._ends('ing')) and self._vowel_in_stem():
            self.k = self.j
            if self._ends('at'):
                self._set_to('ate')
            elif self._ends('bl'):
                self._set_to('ble')
            elif self._ends('iz'):
                self._set_to('ize')
            elif self._double_cons(self.k):
                self.k -= 1
                if self.b[self.k] in 'lsz':
                    self.k += 1
            elif self._m() == 1 and self._cvc(self.k):
                self._set_to('e')

    def _step1c(self) -> None:
        if self._ends('y') and self._vowel_in_stem():
            self.b[self.k] = 'i'

    # Suffix tables keyed by the penultimate (step 2, 4) or last (step 3) letter.
    # Within a key, the first matching suffix decides; later ones are not tried.
    _STEP2 = {
        'a': (('ational', 'ate'), ('tional', 'tion')),
        'c': (('enci', 'ence'), ('anci', 'ance')),
        'e': (('izer', 'ize'),),
        'l': (('bli', 'ble'), ('alli', 'al'), ('entli', 'ent'), ('eli', 'e'), ('ousli', 'ous')),
        'o': (('ization', 'ize'), ('ation', 'ate'), ('ator', 'ate')),
        's': (('alism', 'al'), ('iveness', 'ive'), ('fulness', 'ful'), ('ousness', 'ous')),
        't': (('aliti', 'al'), ('iviti', 'ive'), ('biliti', 'ble')),
        'g': (('logi', 'log'),),
    }
    _STEP3 = {
        'e': (('icate', 'ic'), ('ative', ''), ('alize', 'al')),
        'i': (('iciti', 'ic'),),
        'l': (('ical', 'ic'), ('ful', '')),
        's': (('ness', ''),),
    }
    _STEP4 = {
        'a': ('al',),
        'c': ('ance', 'ence'),
        'e': ('er',),
        'i': ('ic',),
        'l': ('able', 'ible'),
        'n': ('ant', 'ement', 'ment', 'ent'),
        'o': ('ion', 'ou'),
        's': ('ism',),
        't': ('ate', 'iti'),
        'u': ('ous',),
        'v': ('ive',),
        'z': ('ize',),
    }

    def _step2(self) -> None:
        for suffix, replacement in self._STEP2.get(self.b[self.k - 1], ()):
            if self._ends(suffix):
                self._replace(replacement)
                return

    def _step3(self) -> None:
        for suffix, replacement in self._STEP3.get(self.b[self.k], ()):
            if self._ends(suffix):
                self._replace(replacement)
                return

    def _step4(self) -> None:
        for suffix in self._STEP4.get(self.b[self.k - 1], ()):
            if self._ends(suffix):
                if suffix == 'ion' and not (self.j >= 0 and self.b[self.j] in 'st'):
                    continue
                break
        else:
            return
        if self._m() > 1:
            self.k = self.j

    def _step5(self) -> None:
        self.j = self.k
        if self.b[self.k] == 'e':
            a = self._m()
            if a > 1 or (a == 1 and not self._cvc(self.k - 1)):
                self.k -= 1
        if self.b[self.k] == 'l' and self._double_cons(self.k) and self._m() > 1:
            self.k -= 1

    def stem(self, word: str) -> str:
        """Stem a lowercase word; words of one or two letters are returned as-is"""
        if len(word) <= 2:
            return word
        self.b = list(word)
        self.k = len(word) - 1
        self.j = 0
        self._step1ab()
        if self.k > 0:
            self._step1c()
            self._step2()
            self._step3()
            self._step4()
            self._step5()
        return ''.join(self.b[:self.k + 1])


@lru_cache(maxsize=65536)
def stem_word(word: str) -> str:
    """Stem an alphabetic token; anything else passes through unchanged"""
    if not word.isalpha() or not word.isascii():
        return word
    return PorterStemmer().stem(word.lower())
