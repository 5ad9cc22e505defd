use std::fmt;

use super::NativeError;

/// Executable machine code. The mapping is read+execute once constructed
/// and unmapped on drop.
pub struct CodeHandle {
    ptr: *mut u8,
    len: usize,
    owner: u64,
}

// SAFETY: the mapping is never written after construction, so sharing or
// moving the handle across threads cannot race.
unsafe impl Send for CodeHandle {}
unsafe impl Sync for CodeHandle {}

impl fmt::Debug for CodeHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CodeHandle").field("len", &self.len).field("owner", &self.owner).finish()
    }
}

impl CodeHandle {
    #[cfg(unix)]
    pub(super) fn new(code: &[u8], owner: u64) -> Result<Self, NativeError> {
        let len = code.len().max(1);
        // SAFETY: a fresh anonymous private mapping; we only write within
        // its bounds before making it executable.
        unsafe {
            let ptr = libc::mmap(
                std::ptr::null_mut(),
                len,
                libc::PROT_READ | libc::PROT_WRITE,
                libc::MAP_PRIVATE | libc::MAP_ANONYMOUS,
                -1,
                0,
            );
            if ptr == libc::MAP_FAILED {
                return Err(NativeError::Map(std::io::Error::last_os_error().to_string()));
            }
            std::ptr::copy_nonoverlapping(code.as_ptr(), ptr as *mut u8, code.len());
            if libc::mprotect(ptr, len, libc::PROT_READ | libc::PROT_EXEC) != 0 {
                let e = std::io::Error::last_os_error();
                libc::munmap(ptr, len);
                return Err(NativeError::Map(e.to_string()));
            }
            Ok(CodeHandle { ptr: ptr as *mut u8, len, owner })
        }
    }

    #[cfg(not(unix))]
    pub(super) fn new(_code: &[u8], _owner: u64) -> Result<Self, NativeError> {
        Err(NativeError::Unsupported)
    }

    pub(super) fn entry(&self) -> *const u8 {
        self.ptr
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Instance id of the runtime this code was compiled for.
    pub fn owner(&self) -> u64 {
        self.owner
    }
}

impl Drop for CodeHandle {
    fn drop(&mut self) {
        #[cfg(unix)]
        // SAFETY: ptr/len describe the mapping created in `new`.
        unsafe {
            libc::munmap(self.ptr as *mut libc::c_void, self.len);
        }
    }
}
