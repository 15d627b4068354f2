# This file is part of nlkg.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

import typing

# Keep mypy away from the generated version module.
if typing.TYPE_CHECKING:
    __version__ = "?"
else:
    try:
        from importlib.metadata import version

        __version__ = version("nlkg")
    except Exception:
        __version__ = "?"
